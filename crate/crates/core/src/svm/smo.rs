use serde::{Deserialize, Serialize};

use super::{rbf_padded, SvmParams};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

/// Dual variables for every training point plus the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub sv: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
}

impl BinaryModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (v, c) in self.sv.iter().zip(&self.coef) {
            s += c * rbf_padded(v, x, self.gamma);
        }
        s - self.rho
    }
}

fn check_problem(x: &[Vec<f64>], y: &[i8]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("feature and label counts differ"));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::invalid("binary labels must be +1 or -1"));
    }
    if !(y.contains(&1) && y.contains(&-1)) {
        return Err(Error::invalid("binary training needs both classes"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("rows of different lengths"));
    }
    Ok(())
}

/// SMO on the C-SVC dual with maximal-violating-pair selection; stops once
/// the violation gap drops below `p.tol`.
pub fn solve_binary(x: &[Vec<f64>], y: &[i8], p: &SvmParams) -> Result<BinarySolution> {
    p.validate()?;
    check_problem(x, y)?;
    let l = x.len();
    let c = p.c;
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let mut q = vec![0.0; l * l];
    for i in 0..l {
        for j in i..l {
            let v = yf[i] * yf[j] * rbf_padded(&x[i], &x[j], p.gamma);
            q[i * l + j] = v;
            q[j * l + i] = v;
        }
    }
    let mut alpha = vec![0.0; l];
    let mut g = vec![-1.0; l];
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut iter = 0;
    while iter < p.max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..l {
            let v = -yf[t] * g[t];
            if up(alpha[t], yf[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], yf[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < p.tol {
            break;
        }
        iter += 1;
        let (qi, qj) = (&q[i * l..(i + 1) * l], &q[j * l..(j + 1) * l]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yf[i] != yf[j] {
            let quad = (qi[i] + qj[j] + 2.0 * qi[j]).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qi[i] + qj[j] - 2.0 * qi[j]).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..l {
            g[t] += qi[t] * di + qj[t] * dj;
        }
    }
    if iter >= p.max_iter {
        log::warn!("SMO stopped at the iteration limit {}", p.max_iter);
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = yf[t] * g[t];
        if alpha[t] >= c {
            if yf[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if yf[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    Ok(BinarySolution {
        alpha,
        rho,
        iterations: iter,
    })
}

pub fn train_binary(x: &[Vec<f64>], y: &[i8], p: &SvmParams) -> Result<BinaryModel> {
    let s = solve_binary(x, y, p)?;
    let mut sv = Vec::new();
    let mut coef = Vec::new();
    for (t, &a) in s.alpha.iter().enumerate() {
        if a > 0.0 {
            sv.push(x[t].clone());
            coef.push(a * y[t] as f64);
        }
    }
    Ok(BinaryModel {
        sv,
        coef,
        rho: s.rho,
        gamma: p.gamma,
    })
}

/// Largest violation of the KKT conditions of `s`, measured on `y f(x)`
/// by direct evaluation, together with `|sum alpha_i y_i|`.
pub fn kkt_violation(x: &[Vec<f64>], y: &[i8], s: &BinarySolution, p: &SvmParams) -> (f64, f64) {
    let f = |t: usize| {
        let mut acc = 0.0;
        for (k, &a) in s.alpha.iter().enumerate() {
            if a > 0.0 {
                acc += a * y[k] as f64 * rbf_padded(&x[k], &x[t], p.gamma);
            }
        }
        acc - s.rho
    };
    let mut worst = 0.0f64;
    for t in 0..x.len() {
        let m = y[t] as f64 * f(t);
        let a = s.alpha[t];
        let v = if a <= 0.0 {
            (1.0 - m).max(0.0)
        } else if a >= p.c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    let balance: f64 = s.alpha.iter().zip(y).map(|(a, &yi)| a * yi as f64).sum();
    (worst, balance.abs())
}
