//! Nearest points of two reduced convex hulls by pairwise mass transfer
//! (Mitchell–Dem'yanov–Malozemov steps, a Gilbert / Frank–Wolfe variant).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RchSolution {
    pub distance: f64,
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes `‖Σ_{p} α_i φ(x_i) − Σ_{n} α_j φ(x_j)‖` with each class's weights
/// on the simplex and capped at `cap`. `gram` is the kernel matrix of all
/// samples and `y` their ±1 labels.
pub fn rch_distance(gram: &DMatrix<f64>, y: &[i8], cap: f64, tol: f64) -> Result<RchSolution> {
    let m = y.len();
    if gram.nrows() != m || gram.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: gram.nrows(),
        });
    }
    let classes: Vec<Vec<usize>> = [1i8, -1]
        .iter()
        .map(|&c| (0..m).filter(|&i| y[i] == c).collect())
        .collect();
    for idx in &classes {
        if idx.is_empty() || (idx.len() as f64) * cap < 1.0 - 1e-12 {
            return Err(Error::Infeasible(format!(
                "{} samples with cap {cap} cannot carry unit mass",
                idx.len()
            )));
        }
    }
    let sign: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let q = DMatrix::from_fn(m, m, |i, j| sign[i] * sign[j] * gram[(i, j)]);
    let mut alpha = vec![0.0; m];
    for idx in &classes {
        for &i in idx {
            alpha[i] = 1.0 / idx.len() as f64;
        }
    }
    let mut grad = &q * DVector::from_column_slice(&alpha);
    let max_iter = 1_000_000;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        // pick, over both classes, the pair with the steepest descent
        let mut best: Option<(usize, usize, f64)> = None;
        for idx in &classes {
            let donor = idx
                .iter()
                .copied()
                .filter(|&i| alpha[i] > 0.0)
                .max_by(|&a, &b| grad[a].total_cmp(&grad[b]));
            let taker = idx
                .iter()
                .copied()
                .filter(|&j| alpha[j] < cap)
                .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
            if let (Some(i), Some(j)) = (donor, taker) {
                let slack = grad[i] - grad[j];
                if best.map_or(true, |(_, _, s)| slack > s) {
                    best = Some((i, j, slack));
                }
            }
        }
        let Some((i, j, slack)) = best else { break };
        let scale = 1.0 + grad.amax();
        if slack <= tol * scale {
            break;
        }
        let curv = q[(i, i)] + q[(j, j)] - 2.0 * q[(i, j)];
        let limit = alpha[i].min(cap - alpha[j]);
        let step = if curv > 0.0 { (slack / curv).min(limit) } else { limit };
        if step <= 0.0 {
            break;
        }
        alpha[i] -= step;
        alpha[j] += step;
        for k in 0..m {
            grad[k] += step * (q[(k, j)] - q[(k, i)]);
        }
        if iterations % 1000 == 0 {
            grad = &q * DVector::from_column_slice(&alpha);
        }
    }
    let a = DVector::from_column_slice(&alpha);
    let distance = a.dot(&(&q * &a)).max(0.0).sqrt();
    Ok(RchSolution {
        distance,
        alpha,
        iterations,
    })
}
