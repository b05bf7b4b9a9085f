use std::sync::Arc;

use super::{eval_feature, Integrals, RectFeature, StrongClassifier, WeakClassifier, Window};
use crate::error::{Error, Result};
use crate::imgcore::Image;

/// A training window with its label.
#[derive(Clone, Debug)]
pub struct LabeledWindow {
    pub integrals: Arc<Integrals>,
    pub window: Window,
    pub positive: bool,
}

impl LabeledWindow {
    /// Uses an entire `base x base` gray image as one sample.
    pub fn from_image(img: &Image, positive: bool, normalize: bool) -> Result<Self> {
        if img.width() != img.height() {
            return Err(Error::invalid("training patches must be square"));
        }
        let integrals = Arc::new(Integrals::new(img)?);
        let size = img.width() as u32;
        let window = integrals.window(0, 0, size, size, normalize)?;
        Ok(LabeledWindow {
            integrals,
            window,
            positive,
        })
    }

    pub fn value(&self, f: &RectFeature) -> Result<f64> {
        eval_feature(f, &self.integrals.sum, &self.window)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundReport {
    /// Index into the feature pool.
    pub feature: usize,
    pub error: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub polarity: i8,
}

/// Discrete AdaBoost over decision stumps on a fixed sample set.
///
/// Feature responses are computed and sorted once; each round is then a
/// linear sweep per feature.
pub struct AdaBoost<'a> {
    pool: &'a [RectFeature],
    labels: Vec<bool>,
    values: Vec<f64>,
    order: Vec<u32>,
    weights: Vec<f64>,
    chosen: Vec<(WeakClassifier, f64)>,
    last_outputs: Vec<bool>,
}

/// Smallest weighted error used when a stump is perfect.
const MIN_ERROR: f64 = 1e-10;

impl<'a> AdaBoost<'a> {
    pub fn new(samples: &[LabeledWindow], pool: &'a [RectFeature]) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::invalid("empty feature pool"));
        }
        let n_pos = samples.iter().filter(|s| s.positive).count();
        let n_neg = samples.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::DegenerateTraining(format!(
                "need both labels, got {n_pos} positive and {n_neg} negative samples"
            )));
        }
        let n = samples.len();
        let mut values = Vec::with_capacity(pool.len() * n);
        let mut order = Vec::with_capacity(pool.len() * n);
        let mut idx: Vec<u32> = (0..n as u32).collect();
        for f in pool {
            let start = values.len();
            for s in samples {
                values.push(s.value(f)?);
            }
            let col = &values[start..];
            idx.sort_unstable_by(|&a, &b| {
                col[a as usize]
                    .total_cmp(&col[b as usize])
                    .then(a.cmp(&b))
            });
            order.extend_from_slice(&idx);
        }
        let weights = samples
            .iter()
            .map(|s| {
                if s.positive {
                    0.5 / n_pos as f64
                } else {
                    0.5 / n_neg as f64
                }
            })
            .collect();
        Ok(AdaBoost {
            pool,
            labels: samples.iter().map(|s| s.positive).collect(),
            values,
            order,
            weights,
            chosen: Vec::new(),
            last_outputs: Vec::new(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stump outputs of the most recent round, one per sample.
    pub fn last_outputs(&self) -> &[bool] {
        &self.last_outputs
    }

    pub fn rounds(&self) -> usize {
        self.chosen.len()
    }

    /// Weak classifiers so far, thresholded at half the total vote.
    pub fn classifier(&self) -> StrongClassifier {
        let mut s = StrongClassifier {
            weak: self.chosen.clone(),
            threshold: 0.0,
        };
        s.threshold = 0.5 * s.alpha_sum();
        s
    }

    /// Best stump for the current weights: `(feature, threshold, polarity, error)`.
    fn best_stump(&self) -> (usize, f64, i8, f64) {
        let n = self.labels.len();
        let (mut t_pos, mut t_neg) = (0.0, 0.0);
        for (w, &l) in self.weights.iter().zip(&self.labels) {
            if l {
                t_pos += w;
            } else {
                t_neg += w;
            }
        }
        let mut best = (0usize, 0.0f64, 1i8, f64::INFINITY);
        for f in 0..self.pool.len() {
            let vals = &self.values[f * n..(f + 1) * n];
            let ord = &self.order[f * n..(f + 1) * n];
            let (mut s_pos, mut s_neg) = (0.0, 0.0);
            for k in 0..=n {
                let cut_ok = k == 0 || k == n || vals[ord[k - 1] as usize] < vals[ord[k] as usize];
                if cut_ok {
                    // samples ord[..k] fall below the threshold
                    let e_plus = s_neg + (t_pos - s_pos);
                    let e_minus = s_pos + (t_neg - s_neg);
                    if e_plus < best.3 {
                        best = (f, stump_threshold(vals, ord, k, 1), 1, e_plus);
                    }
                    if e_minus < best.3 {
                        best = (f, stump_threshold(vals, ord, k, -1), -1, e_minus);
                    }
                }
                if k < n {
                    let i = ord[k] as usize;
                    if self.labels[i] {
                        s_pos += self.weights[i];
                    } else {
                        s_neg += self.weights[i];
                    }
                }
            }
        }
        best
    }

    /// Adds one weak classifier and reweights the samples.
    pub fn step(&mut self) -> Result<RoundReport> {
        let (f, threshold, polarity, error) = self.best_stump();
        if error >= 0.5 {
            return Err(Error::DegenerateTraining(format!(
                "best weak classifier has weighted error {error:.6} >= 0.5"
            )));
        }
        let eps = error.max(MIN_ERROR);
        let alpha = ((1.0 - eps) / eps).ln();
        let weak = WeakClassifier {
            feature: self.pool[f].clone(),
            threshold,
            polarity,
        };
        let n = self.labels.len();
        let vals = &self.values[f * n..(f + 1) * n];
        self.last_outputs = vals.iter().map(|&v| weak.decide(v)).collect();
        let boost = alpha.exp();
        for i in 0..n {
            if self.last_outputs[i] != self.labels[i] {
                self.weights[i] *= boost;
            }
        }
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        self.chosen.push((weak, alpha));
        Ok(RoundReport {
            feature: f,
            error,
            alpha,
            threshold,
            polarity,
        })
    }
}

/// Threshold separating `ord[..k]` (below) from `ord[k..]` for polarity `p`.
fn stump_threshold(vals: &[f64], ord: &[u32], k: usize, p: i8) -> f64 {
    let n = ord.len();
    let v = |i: usize| vals[ord[i] as usize];
    let pad = |x: f64| x.abs().max(1.0);
    if k == 0 {
        return if p > 0 { v(0) } else { v(0) - pad(v(0)) };
    }
    if k == n {
        return if p > 0 { v(n - 1) + pad(v(n - 1)) } else { v(n - 1) };
    }
    let (lo, hi) = (v(k - 1), v(k));
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid < hi {
        mid
    } else if p > 0 {
        hi
    } else {
        lo
    }
}

/// Runs `rounds` boosting rounds and returns the resulting strong classifier
/// with threshold half the total vote.
pub fn train_adaboost(
    samples: &[LabeledWindow],
    pool: &[RectFeature],
    rounds: usize,
) -> Result<StrongClassifier> {
    if rounds == 0 {
        return Err(Error::invalid("at least one boosting round is required"));
    }
    let mut ab = AdaBoost::new(samples, pool)?;
    for _ in 0..rounds {
        ab.step()?;
    }
    Ok(ab.classifier())
}
