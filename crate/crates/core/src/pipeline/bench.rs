use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::detector::Detectors;
use super::sequence::LabeledSequence;
use super::session::{Session, Timings};
use super::SessionConfig;
use crate::error::{Error, Result};
use crate::svm::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub mean_us: f64,
    pub median_us: f64,
    pub p95_us: f64,
}

impl StageStats {
    fn new(stage: &str, mut v: Vec<u64>) -> Self {
        v.sort_unstable();
        let n = v.len();
        let q = |p: f64| v[((p * (n - 1) as f64).round() as usize).min(n - 1)] as f64;
        StageStats {
            stage: stage.to_string(),
            mean_us: v.iter().sum::<u64>() as f64 / n as f64,
            median_us: if n % 2 == 1 {
                v[n / 2] as f64
            } else {
                (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
            },
            p95_us: q(0.95),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub stages: Vec<StageStats>,
    pub total: StageStats,
    /// Mean frame time times ten, in milliseconds.
    pub ms_per_10_frames: f64,
    /// Frames whose stage times summed to more than the frame total.
    pub accounting_violations: usize,
    /// Published per-10-frame ranges to compare against, in milliseconds.
    pub reference_ranges_ms: Vec<(f64, f64)>,
}

impl BenchmarkReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} frames at {}x{}: {:.1} ms per 10 frames (median frame {:.2} ms, p95 {:.2} ms)\n",
            self.frames,
            self.width,
            self.height,
            self.ms_per_10_frames,
            self.total.median_us / 1000.0,
            self.total.p95_us / 1000.0
        );
        for st in &self.stages {
            s.push_str(&format!(
                "  {:<10} mean {:>8.1} us  median {:>8.1} us  p95 {:>8.1} us\n",
                st.stage, st.mean_us, st.median_us, st.p95_us
            ));
        }
        for (lo, hi) in &self.reference_ranges_ms {
            let verdict = if self.ms_per_10_frames <= *hi { "within or below" } else { "above" };
            s.push_str(&format!("  reference {lo}-{hi} ms per 10 frames: {verdict}\n"));
        }
        s
    }
}

/// Processes up to `max_frames` frames (all when `None`) of the sequences,
/// one fresh session per sequence with `model` attached when given, and aggregates the per-frame timings.
pub fn benchmark(
    sequences: &[LabeledSequence],
    config: &SessionConfig,
    detectors: &Detectors,
    model: Option<Arc<Model>>,
    max_frames: Option<usize>,
) -> Result<BenchmarkReport> {
    if sequences.is_empty() {
        return Err(Error::invalid("no sequences to benchmark"));
    }
    let limit = max_frames.unwrap_or(usize::MAX);
    let mut timings: Vec<Timings> = Vec::new();
    let mut dims = (0, 0);
    'outer: for seq in sequences {
        let mut session = Session::new(config.clone(), detectors.clone())?;
        session.set_model(model.clone());
        for frame in seq.frames.iter() {
            if timings.len() >= limit {
                break 'outer;
            }
            let frame = frame?;
            dims = (frame.width(), frame.height());
            timings.push(session.process_frame(&frame)?.timings);
        }
    }
    if timings.is_empty() {
        return Err(Error::invalid("sequences contain no frames"));
    }
    let stages = Timings::STAGES
        .iter()
        .enumerate()
        .map(|(i, name)| StageStats::new(name, timings.iter().map(|t| t.stages()[i]).collect()))
        .collect();
    let total = StageStats::new("total", timings.iter().map(|t| t.total_us).collect());
    Ok(BenchmarkReport {
        frames: timings.len(),
        width: dims.0,
        height: dims.1,
        stages,
        ms_per_10_frames: total.mean_us * 10.0 / 1000.0,
        total,
        accounting_violations: timings.iter().filter(|t| t.stage_sum() > t.total_us).count(),
        reference_ranges_ms: vec![(100.0, 120.0), (120.0, 150.0)],
    })
}
