//! RBF support vector classification: feature scaling, an SMO dual solver,
//! one-vs-one multiclass voting, cross-validated grid search and
//! libSVM-compatible files.

mod cv;
mod io;
mod smo;

pub use cv::{
    cross_validate, default_c_grid, default_gamma_grid, grid_search, stratified_folds, GridCell,
    GridResult,
};
pub use io::{
    load_model, parse_model, parse_problem, parse_range, read_problem, save_model, write_model,
    write_problem, write_range,
};
pub use smo::{kkt_violation, solve_binary, train_binary, BinaryModel, BinarySolution};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: i32,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: i32) -> Self {
        Sample { features, label }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: 1.0 / 42.0,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

impl SvmParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        SvmParams {
            c,
            gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.c) || !pos(self.gamma) || !pos(self.tol) {
            return Err(Error::invalid(format!(
                "C, gamma and tol must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel arguments of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(rbf_padded(x, y, gamma))
}

/// Kernel treating missing trailing coordinates as zero, as sparse files do.
#[inline]
pub(crate) fn rbf_padded(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let n = x.len().max(y.len());
    let mut d2 = 0.0;
    for i in 0..n {
        let d = x.get(i).copied().unwrap_or(0.0) - y.get(i).copied().unwrap_or(0.0);
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

/// Per-dimension min/max mapping to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalingParams {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut it = rows.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::invalid("scaling needs at least one row"))?;
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for r in it {
            if r.len() != min.len() {
                return Err(Error::invalid("rows of different lengths"));
            }
            for (d, &v) in r.iter().enumerate() {
                min[d] = min[d].min(v);
                max[d] = max[d].max(v);
            }
        }
        Ok(ScalingParams { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn scale_value(&self, d: usize, v: f64) -> f64 {
        match (self.min.get(d), self.max.get(d)) {
            (Some(&lo), Some(&hi)) if hi > lo => -1.0 + 2.0 * (v - lo) / (hi - lo),
            _ => 0.0,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(d, &v)| self.scale_value(d, v)).collect()
    }
}

pub fn scale_fit(samples: &[Sample]) -> Result<ScalingParams> {
    ScalingParams::fit(samples.iter().map(|s| s.features.as_slice()))
}

pub fn scale_apply(params: &ScalingParams, x: &[f64]) -> Vec<f64> {
    params.apply(x)
}

/// One-vs-one model in libSVM's layout: support vectors grouped by class in
/// label order, `sv_coef` has `k - 1` rows, `rho` one entry per pair in
/// `(0,1), (0,2), .., (1,2), ..` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub gamma: f64,
    pub labels: Vec<i32>,
    pub nr_sv: Vec<usize>,
    pub sv: Vec<Vec<f64>>,
    pub sv_coef: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    /// Applied to inputs before the kernel; `None` means inputs are used as is.
    pub scaling: Option<ScalingParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: i32,
    /// Votes per label, in `Model::labels` order.
    pub votes: Vec<usize>,
}

impl Model {
    pub fn nr_class(&self) -> usize {
        self.labels.len()
    }

    fn starts(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.nr_sv.len());
        let mut acc = 0;
        for &n in &self.nr_sv {
            s.push(acc);
            acc += n;
        }
        s
    }

    fn prepare(&self, x: &[f64]) -> Vec<f64> {
        match &self.scaling {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        }
    }

    /// Pairwise decision values on an already scaled input.
    pub fn decision_values_scaled(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.sv.iter().map(|s| rbf_padded(s, x, self.gamma)).collect();
        let start = self.starts();
        let n = self.nr_class();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        let mut p = 0;
        for i in 0..n {
            for j in i + 1..n {
                let mut sum = 0.0;
                let (si, sj) = (start[i], start[j]);
                for t in 0..self.nr_sv[i] {
                    sum += self.sv_coef[j - 1][si + t] * k[si + t];
                }
                for t in 0..self.nr_sv[j] {
                    sum += self.sv_coef[i][sj + t] * k[sj + t];
                }
                out.push(sum - self.rho[p]);
                p += 1;
            }
        }
        out
    }

    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        self.decision_values_scaled(&self.prepare(x))
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let n = self.nr_class();
        let dec = self.decision_values(x);
        let mut votes = vec![0usize; n];
        let mut p = 0;
        for i in 0..n {
            for j in i + 1..n {
                if dec[p] > 0.0 {
                    votes[i] += 1;
                } else {
                    votes[j] += 1;
                }
                p += 1;
            }
        }
        // labels are ascending, so the first maximum is the lowest id
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        Prediction {
            label: self.labels[best],
            votes,
        }
    }
}

pub fn predict(model: &Model, x: &[f64]) -> Prediction {
    model.predict(x)
}

/// Fits scaling on `samples`, then trains on the scaled data.
pub fn train_multiclass(samples: &[Sample], p: &SvmParams) -> Result<Model> {
    let scaling = scale_fit(samples)?;
    let scaled: Vec<Sample> = samples
        .iter()
        .map(|s| Sample::new(scaling.apply(&s.features), s.label))
        .collect();
    let mut m = train_multiclass_prescaled(&scaled, p)?;
    m.scaling = Some(scaling);
    Ok(m)
}

/// Trains on `samples` as given; the returned model has no scaling.
pub fn train_multiclass_prescaled(samples: &[Sample], p: &SvmParams) -> Result<Model> {
    p.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let dim = samples[0].features.len();
    if samples.iter().any(|s| s.features.len() != dim || s.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("samples must share a length and be finite"));
    }
    let mut labels: Vec<i32> = samples.iter().map(|s| s.label).collect();
    labels.sort_unstable();
    labels.dedup();
    let n = labels.len();
    let groups: Vec<Vec<&Sample>> = labels
        .iter()
        .map(|&l| samples.iter().filter(|s| s.label == l).collect())
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let solved: Vec<(Vec<f64>, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let x: Vec<Vec<f64>> = groups[i]
                .iter()
                .chain(&groups[j])
                .map(|s| s.features.clone())
                .collect();
            let y: Vec<i8> = groups[i]
                .iter()
                .map(|_| 1)
                .chain(groups[j].iter().map(|_| -1))
                .collect();
            solve_binary(&x, &y, p).map(|s| (s.alpha, s.rho))
        })
        .collect::<Result<_>>()?;

    // a sample is a support vector if it is one in any pair
    let mut nonzero: Vec<Vec<bool>> = groups.iter().map(|g| vec![false; g.len()]).collect();
    for (&(i, j), (alpha, _)) in pairs.iter().zip(&solved) {
        let ni = groups[i].len();
        for (t, &a) in alpha.iter().enumerate() {
            if a > 0.0 {
                if t < ni {
                    nonzero[i][t] = true;
                } else {
                    nonzero[j][t - ni] = true;
                }
            }
        }
    }
    let nr_sv: Vec<usize> = nonzero.iter().map(|v| v.iter().filter(|&&b| b).count()).collect();
    let mut start = vec![0; n];
    for c in 1..n {
        start[c] = start[c - 1] + nr_sv[c - 1];
    }
    // position of each support vector in the global list
    let mut pos: Vec<Vec<Option<usize>>> = Vec::with_capacity(n);
    let mut sv = Vec::new();
    for c in 0..n {
        let mut k = start[c];
        pos.push(
            nonzero[c]
                .iter()
                .enumerate()
                .map(|(t, &nz)| {
                    nz.then(|| {
                        sv.push(groups[c][t].features.clone());
                        k += 1;
                        k - 1
                    })
                })
                .collect(),
        );
    }
    let total = sv.len();
    let mut sv_coef = vec![vec![0.0; total]; n.saturating_sub(1)];
    let mut rho = Vec::with_capacity(pairs.len());
    for (&(i, j), (alpha, r)) in pairs.iter().zip(&solved) {
        let ni = groups[i].len();
        for (t, &a) in alpha.iter().enumerate() {
            if a > 0.0 {
                if t < ni {
                    sv_coef[j - 1][pos[i][t].unwrap()] = a;
                } else {
                    sv_coef[i][pos[j][t - ni].unwrap()] = -a;
                }
            }
        }
        rho.push(*r);
    }
    Ok(Model {
        gamma: p.gamma,
        labels,
        nr_sv,
        sv,
        sv_coef,
        rho,
        scaling: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn blobs(per_class: usize, seed: u64) -> Vec<Sample> {
        let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0], [6.0, 6.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for (label, c) in centers.iter().enumerate() {
            for _ in 0..per_class {
                let x = c[0] + rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
                let y = c[1] + rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
                out.push(Sample::new(vec![x, y], label as i32));
            }
        }
        out
    }

    #[test]
    fn scaling_examples() {
        let s = ScalingParams {
            min: vec![0.0, 3.0],
            max: vec![10.0, 3.0],
        };
        assert_eq!(s.apply(&[10.0, 7.0]), vec![1.0, 0.0]);
        assert_eq!(s.apply(&[5.0, 3.0]), vec![0.0, 0.0]);
        assert_eq!(s.apply(&[0.0, 3.0, 9.0]), vec![-1.0, 0.0, 0.0]);
        assert!(matches!(scale_fit(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn rbf_examples() {
        assert_eq!(rbf(&[1.0, 2.0], &[1.0, 2.0], 0.5).unwrap(), 1.0);
        assert!((rbf(&[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap() - 0.3678794).abs() < 1e-7);
        assert!(rbf(&[0.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn single_class_always_predicts_it() {
        let s = vec![Sample::new(vec![1.0, 2.0], 3), Sample::new(vec![0.0, 5.0], 3)];
        let m = train_multiclass(&s, &SvmParams::new(1.0, 1.0)).unwrap();
        assert!(m.rho.is_empty());
        for x in [[0.0, 0.0], [9.0, -4.0]] {
            assert_eq!(m.predict(&x).label, 3);
        }
        assert!(train_multiclass(&[], &SvmParams::default()).is_err());
    }

    #[test]
    fn blobs_generalize() {
        let train = blobs(30, 1);
        let test = blobs(30, 2);
        let m = train_multiclass(&train, &SvmParams::new(10.0, 1.0)).unwrap();
        assert_eq!(m.rho.len(), 6);
        assert_eq!(m.sv_coef.len(), 3);
        let ok = test.iter().filter(|s| m.predict(&s.features).label == s.label).count();
        assert!(ok as f64 / test.len() as f64 >= 0.95, "{ok}/120");
    }

    #[test]
    fn vote_tie_goes_to_lowest_label() {
        // three classes, each pair decided in a cycle: 0 beats 1, 1 beats 2, 2 beats 0
        let m = Model {
            gamma: 1.0,
            labels: vec![4, 7, 9],
            nr_sv: vec![0, 0, 0],
            sv: vec![],
            sv_coef: vec![vec![], vec![]],
            rho: vec![-1.0, 1.0, -1.0],
            scaling: None,
        };
        let p = m.predict(&[0.0]);
        assert_eq!(p.votes, vec![1, 1, 1]);
        assert_eq!(p.label, 4);
    }

    #[test]
    fn prescaled_matches_internal_scaling() {
        let train = blobs(15, 5);
        let p = SvmParams::new(4.0, 0.5);
        let m = train_multiclass(&train, &p).unwrap();
        let scaling = m.scaling.clone().unwrap();
        let scaled: Vec<Sample> = train
            .iter()
            .map(|s| Sample::new(scaling.apply(&s.features), s.label))
            .collect();
        let raw = train_multiclass_prescaled(&scaled, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = [rng.gen_range(-2.0..8.0), rng.gen_range(-2.0..8.0)];
            assert_eq!(m.predict(&x), raw.predict(&scaling.apply(&x)));
        }
    }

    #[test]
    fn pairwise_svs_come_from_their_classes() {
        let m = train_multiclass(&blobs(10, 3), &SvmParams::new(1.0, 1.0)).unwrap();
        assert_eq!(m.nr_sv.iter().sum::<usize>(), m.sv.len());
        let starts = m.starts();
        // a class's coefficient against a higher class is positive, against a lower one negative
        for c in 0..4 {
            for t in starts[c]..starts[c] + m.nr_sv[c] {
                for row in 0..3 {
                    let v = m.sv_coef[row][t];
                    assert!(v == 0.0 || (v > 0.0) == (row >= c), "class {c} row {row}: {v}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rbf_symmetric_in_unit_interval(x in prop::collection::vec(-2.0f64..2.0, 4), y in prop::collection::vec(-2.0f64..2.0, 4), g in 0.01f64..3.0) {
            let a = rbf(&x, &y, g).unwrap();
            prop_assert_eq!(a, rbf(&y, &x, g).unwrap());
            prop_assert!(a > 0.0 && a <= 1.0);
        }
    }
}
