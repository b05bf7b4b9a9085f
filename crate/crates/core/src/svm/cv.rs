use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_multiclass, Sample, SvmParams};
use crate::error::{Error, Result};

pub fn default_c_grid() -> Vec<f64> {
    (-3..=7).step_by(2).map(|e| 2f64.powi(e)).collect()
}

pub fn default_gamma_grid() -> Vec<f64> {
    (-7..=3).step_by(2).map(|e| 2f64.powi(e)).collect()
}

/// Fold index per sample: each class is shuffled with the seeded generator
/// and dealt round-robin, continuing the deal across classes in label order.
pub fn stratified_folds(labels: &[i32], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut classes: Vec<i32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

/// Fraction of samples predicted correctly when each fold is held out in turn.
pub fn cross_validate(samples: &[Sample], p: &SvmParams, k: usize, seed: u64) -> Result<f64> {
    p.validate()?;
    let labels: Vec<i32> = samples.iter().map(|s| s.label).collect();
    let fold = stratified_folds(&labels, k, seed)?;
    let mut correct = 0usize;
    for f in 0..k {
        let train: Vec<Sample> = samples
            .iter()
            .zip(&fold)
            .filter(|(_, &g)| g != f)
            .map(|(s, _)| s.clone())
            .collect();
        let model = train_multiclass(&train, p)?;
        correct += samples
            .iter()
            .zip(&fold)
            .filter(|(s, &g)| g == f && model.predict(&s.features).label == s.label)
            .count();
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GridCell,
    pub cells: Vec<GridCell>,
}

/// Cross-validated accuracy for every `(C, gamma)` pair; the best cell is
/// the most accurate, ties going to smaller C and then smaller gamma.
pub fn grid_search(
    samples: &[Sample],
    cs: &[f64],
    gammas: &[f64],
    k: usize,
    seed: u64,
    base: &SvmParams,
) -> Result<GridResult> {
    if cs.is_empty() || gammas.is_empty() {
        return Err(Error::invalid("empty parameter grid"));
    }
    let mut cells: Vec<(f64, f64)> = cs.iter().flat_map(|&c| gammas.iter().map(move |&g| (c, g))).collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let cells: Vec<GridCell> = cells
        .par_iter()
        .map(|&(c, gamma)| {
            let p = SvmParams {
                c,
                gamma,
                ..base.clone()
            };
            cross_validate(samples, &p, k, seed).map(|accuracy| GridCell { c, gamma, accuracy })
        })
        .collect::<Result<_>>()?;
    let mut best = cells[0];
    for cell in &cells[1..] {
        if cell.accuracy > best.accuracy {
            best = *cell;
        }
    }
    Ok(GridResult { best, cells })
}

#[cfg(test)]
mod tests {
    use super::super::tests::blobs;
    use super::*;

    #[test]
    fn default_grids() {
        assert_eq!(default_c_grid(), vec![0.125, 0.5, 2.0, 8.0, 32.0, 128.0]);
        assert_eq!(default_gamma_grid().first(), Some(&(1.0 / 128.0)));
        assert_eq!(default_gamma_grid().last(), Some(&8.0));
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<i32> = (0..40).map(|i| i % 4).collect();
        let a = stratified_folds(&labels, 5, 3).unwrap();
        assert_eq!(a, stratified_folds(&labels, 5, 3).unwrap());
        assert_ne!(a, stratified_folds(&labels, 5, 4).unwrap());
        for f in 0..5 {
            for c in 0..4 {
                let n = (0..40).filter(|&i| a[i] == f && labels[i] == c).count();
                assert_eq!(n, 2);
            }
        }
        assert!(stratified_folds(&labels, 1, 0).is_err());
        assert!(stratified_folds(&labels[..3], 5, 0).is_err());
    }

    #[test]
    fn grid_equals_enumeration() {
        let s = blobs(10, 6);
        let base = SvmParams::default();
        let (cs, gs) = ([0.1, 1.0, 10.0], [0.1, 1.0]);
        let r = grid_search(&s, &cs, &gs, 5, 17, &base).unwrap();
        let mut best: Option<GridCell> = None;
        for &c in &cs {
            for &g in &gs {
                let acc = cross_validate(&s, &SvmParams::new(c, g), 5, 17).unwrap();
                if best.map_or(true, |b| acc > b.accuracy) {
                    best = Some(GridCell { c, gamma: g, accuracy: acc });
                }
            }
        }
        assert_eq!(r.best, best.unwrap());
        let one = grid_search(&s, &[2.0], &[0.5], 5, 1, &base).unwrap();
        assert_eq!((one.best.c, one.best.gamma), (2.0, 0.5));
        assert_eq!(r, grid_search(&s, &cs, &gs, 5, 17, &base).unwrap());
    }
}
