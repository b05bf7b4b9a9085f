//! Per-frame orchestration, trainer and evaluator sessions, synthetic
//! sequences, confusion-matrix reporting and throughput measurement.

mod bench;
mod config;
mod detector;
mod eval;
mod sequence;
mod session;
pub mod synth;

pub use bench::{benchmark, BenchmarkReport, StageStats};
pub use config::SessionConfig;
pub use detector::{
    builtin_detectors, detect_faces, train_cascade_from_images, train_detectors, DetectorReports, DetectorTrainSpec,
    Detectors, FaceDetection,
};
pub use eval::{
    collect_vectors, evaluate_session, majority, train_samples, train_session, ConfusionMatrix,
    EvalReport, SequenceOutcome, TrainReport,
    REFERENCE_OVERALL,
};
pub use sequence::{list_frames, read_manifest, write_manifest, Frames, LabeledSequence};
pub use session::{FrameResult, FrameSource, Session, Timings};
pub use synth::{generate_synthetic, SyntheticSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four expression classes, with their SVM label ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expression {
    Neutral = 0,
    Smile = 1,
    Angry = 2,
    Excited = 3,
}

impl Expression {
    pub const ALL: [Expression; 4] = [
        Expression::Neutral,
        Expression::Smile,
        Expression::Angry,
        Expression::Excited,
    ];

    pub fn id(self) -> i32 {
        self as i32
    }

    pub fn from_id(id: i32) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Expression::Neutral => "Neutral",
            Expression::Smile => "Smile",
            Expression::Angry => "Angry",
            Expression::Excited => "Excited",
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(id) = s.parse::<i32>() {
            return Self::from_id(id).ok_or_else(|| Error::invalid(format!("unknown class id {id}")));
        }
        Self::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown expression `{s}`")))
    }
}

/// Display name for a label id: the expression name when it is one.
pub fn label_name(id: i32) -> String {
    Expression::from_id(id).map_or_else(|| id.to_string(), |e| e.name().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_names_and_ids() {
        for e in Expression::ALL {
            assert_eq!(e.name().parse::<Expression>().unwrap(), e);
            assert_eq!(e.id().to_string().parse::<Expression>().unwrap(), e);
        }
        assert_eq!("smile".parse::<Expression>().unwrap(), Expression::Smile);
        assert!("surprise".parse::<Expression>().is_err());
        assert_eq!(label_name(3), "Excited");
        assert_eq!(label_name(9), "9");
    }
}
