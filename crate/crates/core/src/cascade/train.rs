use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{eval_strong, AdaBoost, Cascade, LabeledWindow, Pose, RectFeature, StrongClassifier};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeTrainParams {
    pub base: u32,
    pub max_stages: usize,
    pub max_weak_per_stage: usize,
    /// Per-stage fraction of positives that must be kept.
    pub min_hit_rate: f64,
    /// Per-stage false alarm rate at which boosting stops.
    pub max_false_alarm: f64,
    /// Overall false alarm rate at which no further stages are added.
    pub target_false_alarm: f64,
    pub negatives_per_stage: usize,
    /// Candidate negative windows drawn per stage while bootstrapping.
    pub negative_attempts: usize,
    /// Random subset of the feature pool boosted over in each stage.
    pub features_per_stage: usize,
    pub normalize: bool,
    pub seed: u64,
}

impl Default for CascadeTrainParams {
    fn default() -> Self {
        CascadeTrainParams {
            base: super::DEFAULT_BASE,
            max_stages: 12,
            max_weak_per_stage: 40,
            min_hit_rate: 0.99,
            max_false_alarm: 0.5,
            target_false_alarm: 1e-5,
            negatives_per_stage: 600,
            negative_attempts: 400_000,
            features_per_stage: 3000,
            normalize: true,
            seed: 1,
        }
    }
}

/// Supplies candidate negative windows; only those the partial cascade still
/// accepts are kept for the next stage.
pub trait NegativeSource {
    fn next_window(&mut self, rng: &mut ChaCha8Rng) -> Option<LabeledWindow>;
}

impl<F> NegativeSource for F
where
    F: FnMut(&mut ChaCha8Rng) -> Option<LabeledWindow>,
{
    fn next_window(&mut self, rng: &mut ChaCha8Rng) -> Option<LabeledWindow> {
        self(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub weak: usize,
    pub threshold: f64,
    pub hit_rate: f64,
    pub false_alarm: f64,
    pub negatives: usize,
    /// Fraction of drawn candidates the cascade accepted before this stage.
    pub bootstrap_acceptance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrainReport {
    pub stages: Vec<StageReport>,
    pub stop_reason: String,
}

fn passes(c: &Cascade, s: &LabeledWindow) -> Result<bool> {
    for st in &c.stages {
        if eval_strong(st, &s.integrals.sum, &s.window)?.0 == 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Trains an attentional cascade: each stage boosts until it keeps
/// `min_hit_rate` of the positives while passing at most `max_false_alarm`
/// of the bootstrapped negatives.
pub fn train_cascade(
    positives: &[LabeledWindow],
    negatives: &mut dyn NegativeSource,
    pool: &[RectFeature],
    params: &CascadeTrainParams,
    pose: Pose,
) -> Result<(Cascade, CascadeTrainReport)> {
    if pool.is_empty() {
        return Err(Error::invalid("empty feature pool"));
    }
    if positives.is_empty() || positives.iter().any(|p| !p.positive) {
        return Err(Error::invalid("positives must be non-empty and all labeled positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut cascade = Cascade {
        base: params.base,
        pose,
        stages: Vec::new(),
    };
    let mut report = CascadeTrainReport::default();
    let mut pos: Vec<LabeledWindow> = positives.to_vec();
    let mut overall_fa = 1.0;

    while cascade.stages.len() < params.max_stages {
        let mut neg = Vec::with_capacity(params.negatives_per_stage);
        let mut drawn = 0usize;
        while neg.len() < params.negatives_per_stage && drawn < params.negative_attempts {
            let Some(mut w) = negatives.next_window(&mut rng) else {
                break;
            };
            drawn += 1;
            if passes(&cascade, &w)? {
                w.positive = false;
                neg.push(w);
            }
        }
        let acceptance = if drawn == 0 { 0.0 } else { neg.len() as f64 / drawn as f64 };
        if !cascade.stages.is_empty() {
            overall_fa = acceptance;
        }
        if neg.len() < 10 || (!cascade.stages.is_empty() && overall_fa <= params.target_false_alarm) {
            report.stop_reason = format!(
                "negatives exhausted: {} of {drawn} candidates still accepted",
                neg.len()
            );
            break;
        }

        let mut subset: Vec<RectFeature> = pool.to_vec();
        if subset.len() > params.features_per_stage {
            subset.shuffle(&mut rng);
            subset.truncate(params.features_per_stage);
        }
        let mut samples = pos.clone();
        samples.extend(neg.iter().cloned());
        let n_pos = pos.len();
        let mut ab = AdaBoost::new(&samples, &subset)?;
        let mut scores = vec![0.0f64; samples.len()];
        loop {
            let round = match ab.step() {
                Ok(r) => r,
                Err(Error::DegenerateTraining(_)) if ab.rounds() > 0 => break,
                Err(e) => return Err(e),
            };
            for (s, &fired) in scores.iter_mut().zip(ab.last_outputs()) {
                if fired {
                    *s += round.alpha;
                }
            }
            let threshold = hit_rate_threshold(&scores[..n_pos], params.min_hit_rate);
            let fa = scores[n_pos..].iter().filter(|&&s| s >= threshold).count() as f64
                / neg.len() as f64;
            if fa <= params.max_false_alarm || ab.rounds() >= params.max_weak_per_stage {
                break;
            }
        }
        let mut stage: StrongClassifier = ab.classifier();
        stage.threshold = hit_rate_threshold(&scores[..n_pos], params.min_hit_rate);
        let fa = scores[n_pos..].iter().filter(|&&s| s >= stage.threshold).count() as f64
            / neg.len() as f64;
        let hit = scores[..n_pos].iter().filter(|&&s| s >= stage.threshold).count() as f64
            / n_pos as f64;
        log::debug!(
            "stage {}: {} weak, hit {hit:.4}, false alarm {fa:.4}",
            cascade.stages.len(),
            stage.weak.len()
        );
        report.stages.push(StageReport {
            weak: stage.weak.len(),
            threshold: stage.threshold,
            hit_rate: hit,
            false_alarm: fa,
            negatives: neg.len(),
            bootstrap_acceptance: acceptance,
        });
        let keep: Vec<bool> = scores[..n_pos].iter().map(|&s| s >= stage.threshold).collect();
        pos = pos
            .into_iter()
            .zip(keep)
            .filter_map(|(p, k)| k.then_some(p))
            .collect();
        cascade.stages.push(stage);
    }
    if report.stop_reason.is_empty() {
        report.stop_reason = format!("reached {} stages", cascade.stages.len());
    }
    Ok((cascade, report))
}

/// Largest threshold that keeps at least `rate` of the given scores.
fn hit_rate_threshold(scores: &[f64], rate: f64) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let drop = ((1.0 - rate) * s.len() as f64).floor() as usize;
    s[drop.min(s.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_rate_threshold_keeps_fraction() {
        let scores: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let t = hit_rate_threshold(&scores, 0.99);
        assert_eq!(t, 2.0);
        assert!(scores.iter().filter(|&&s| s >= t).count() >= 198);
        assert_eq!(hit_rate_threshold(&[3.0], 0.99), 3.0);
    }
}
