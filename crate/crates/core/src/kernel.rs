//! Kernels, Gram matrices and kernel expansions `f = Σ β_j k(·, x_j)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::{dot, sq_dist, Samples};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `k(x, x') = exp(−γ‖x − x'‖²)`
    Gaussian { gamma: f64 },
}

impl Kernel {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param(format!("gaussian kernel needs gamma > 0, got {gamma}")));
        }
        Ok(Kernel::Gaussian { gamma })
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Gaussian { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }

    /// `sup_x √k(x, x)` over the given points (1 for the Gaussian kernel).
    pub fn bound(&self, points: &Samples) -> f64 {
        match self {
            Kernel::Gaussian { .. } => 1.0,
            Kernel::Linear => points.rows().map(|r| dot(r, r).sqrt()).fold(0.0, f64::max),
        }
    }
}

/// `G[i][j] = k(x_i, x'_j)`. Rows are filled independently, so the result
/// does not depend on the thread count.
pub fn gram(kernel: &Kernel, x: &Samples, x2: &Samples) -> Result<DMatrix<f64>> {
    if x.dim() != x2.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: x2.dim(),
        });
    }
    let (m, n) = (x.len(), x2.len());
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            x2.rows().map(|xj| kernel.eval(xi, xj)).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

/// Pairwise squared Euclidean distances.
pub fn sq_distances(x: &Samples, x2: &Samples) -> Result<DMatrix<f64>> {
    if x.dim() != x2.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: x2.dim(),
        });
    }
    Ok(DMatrix::from_fn(x.len(), x2.len(), |i, j| sq_dist(x.row(i), x2.row(j))))
}

/// Median of the pairwise squared distances `i < j`; 1 when undefined.
pub fn median_sq_distance(x: &Samples) -> f64 {
    let n = x.len();
    let mut d: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(x.row(i), x.row(j)));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let med = d[d.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Checks that a symmetric matrix is PSD up to `1e-8 · max diag`.
pub fn check_psd(g: &DMatrix<f64>) -> Result<()> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            got: g.ncols(),
        });
    }
    if g.nrows() == 0 {
        return Ok(());
    }
    let scale = g.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(g.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// `f(x) = Σ_j β_j k(x, anchor_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelExpansion {
    pub kernel: Kernel,
    pub anchors: Samples,
    pub coefficients: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(kernel: Kernel, anchors: Samples, coefficients: Vec<f64>) -> Result<Self> {
        if anchors.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: anchors.len(),
                got: coefficients.len(),
            });
        }
        Ok(KernelExpansion {
            kernel,
            anchors,
            coefficients,
        })
    }

    pub fn zero(kernel: Kernel, anchors: Samples) -> Self {
        let n = anchors.len();
        KernelExpansion {
            kernel,
            anchors,
            coefficients: vec![0.0; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&b| b == 0.0)
    }

    pub fn dim(&self) -> usize {
        self.anchors.dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.anchors.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.anchors.dim(),
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.anchors
            .rows()
            .zip(&self.coefficients)
            .filter(|(_, &b)| b != 0.0)
            .map(|(a, &b)| b * self.kernel.eval(x, a))
            .sum()
    }

    pub fn eval_many(&self, points: &Samples) -> Result<Vec<f64>> {
        if points.dim() != self.anchors.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.anchors.dim(),
                got: points.dim(),
            });
        }
        Ok((0..points.len())
            .into_par_iter()
            .map(|i| self.eval_unchecked(points.row(i)))
            .collect())
    }

    /// `βᵀGβ` over the anchor Gram matrix.
    pub fn squared_norm(&self) -> f64 {
        let n = self.anchors.len();
        let mut acc = 0.0;
        for i in 0..n {
            let bi = self.coefficients[i];
            if bi == 0.0 {
                continue;
            }
            let xi = self.anchors.row(i);
            acc += bi * bi * self.kernel.eval(xi, xi);
            for j in (i + 1)..n {
                let bj = self.coefficients[j];
                if bj != 0.0 {
                    acc += 2.0 * bi * bj * self.kernel.eval(xi, self.anchors.row(j));
                }
            }
        }
        acc
    }

    pub fn rkhs_norm(&self) -> Result<f64> {
        let q = self.squared_norm();
        if q < -1e-10 {
            return Err(Error::NotPsd { min_eigenvalue: q });
        }
        Ok(q.max(0.0).sqrt())
    }

    /// `⟨f, g⟩_ℋ` for two expansions sharing a kernel.
    pub fn inner(&self, other: &KernelExpansion) -> Result<f64> {
        if self.kernel != other.kernel {
            return Err(Error::param("inner product of expansions with different kernels"));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let mut acc = 0.0;
        for (a, &ba) in self.anchors.rows().zip(&self.coefficients) {
            for (b, &bb) in other.anchors.rows().zip(&other.coefficients) {
                acc += ba * bb * self.kernel.eval(a, b);
            }
        }
        Ok(acc)
    }

    pub fn scaled(&self, s: f64) -> KernelExpansion {
        KernelExpansion {
            kernel: self.kernel,
            anchors: self.anchors.clone(),
            coefficients: self.coefficients.iter().map(|b| b * s).collect(),
        }
    }
}
