use serde::{Deserialize, Serialize};

use super::{detect_in, Cascade, Detection, Integrals, Pose, ScanParams};
use crate::error::Result;
use crate::imgcore::Rect;

/// Frame counter and memory of the alternating frontal/profile schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InterleaveState {
    frame: u64,
    last: Option<(Rect, Pose)>,
    /// Set by the caller once landmarks exist to fall back on.
    pub tracking_initialized: bool,
}

impl InterleaveState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of the next frame to be processed.
    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Cascade scheduled for the next frame: even frames frontal, odd profile.
    pub fn scheduled(&self) -> Pose {
        if self.frame % 2 == 0 {
            Pose::Frontal
        } else {
            Pose::Profile
        }
    }

    pub fn last_detection(&self) -> Option<(Rect, Pose)> {
        self.last
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectOutcome {
    Face { detection: Detection, pose: Pose },
    FallbackToTracking,
    Nothing,
}

/// Runs the cascade scheduled for this frame, then the other one if the
/// first produced no detection accepted by `verify`.
pub fn interleaved_detect(
    state: &mut InterleaveState,
    frontal: &Cascade,
    profile: &Cascade,
    ints: &Integrals,
    params: &ScanParams,
    mut verify: impl FnMut(&Detection) -> bool,
) -> Result<DetectOutcome> {
    let first = state.scheduled();
    state.frame += 1;
    let order = match first {
        Pose::Frontal => [(frontal, Pose::Frontal), (profile, Pose::Profile)],
        Pose::Profile => [(profile, Pose::Profile), (frontal, Pose::Frontal)],
    };
    for (cascade, pose) in order {
        if ints.width() < cascade.base as usize || ints.height() < cascade.base as usize {
            continue;
        }
        for det in detect_in(cascade, ints, params)? {
            if verify(&det) {
                state.last = Some((det.rect, pose));
                return Ok(DetectOutcome::Face {
                    detection: det,
                    pose,
                });
            }
        }
    }
    Ok(if state.tracking_initialized {
        DetectOutcome::FallbackToTracking
    } else {
        DetectOutcome::Nothing
    })
}
