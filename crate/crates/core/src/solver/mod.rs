//! The minimum-distance dual over two uncertainty sets, the regularized-loss
//! primal it is dual to, and the certificates linking them.

mod dual;
mod offset;
mod primal;
mod rch;

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram, Kernel, KernelExpansion};
use crate::loss::{Loss, LossKind};

pub use dual::{solve_dual, solve_dual_with, SolveOptions};
pub use primal::{nu_svm, solve_primal, NuSvmSolution};
pub use rch::{rch_distance, RchSolution};

use offset::{minimize_offset, Surrogate};

/// Smoothing of the RKHS norm near zero.
pub const NORM_SMOOTHING: f64 = 1e-10;

/// Relative threshold under which the two uncertainty sets are treated as touching.
pub const TOUCH_TOL: f64 = 1e-7;

/// `min (1/m) Σ ℓ*(m α_i) + λ ‖Σ α_i y_i k(·, x_i)‖` over the product of the
/// two class simplices.
#[derive(Debug, Clone)]
pub struct DualProblem {
    loss: Loss,
    kernel: Kernel,
    data: Dataset,
    lambda: f64,
    gram: Arc<DMatrix<f64>>,
    factor: Arc<OnceLock<DMatrix<f64>>>,
    positives: Vec<usize>,
    negatives: Vec<usize>,
}

impl DualProblem {
    pub fn new(loss: Loss, kernel: Kernel, data: Dataset, lambda: f64) -> Result<Self> {
        let g = gram(&kernel, data.x(), data.x())?;
        DualProblem::with_gram(loss, kernel, data, lambda, Arc::new(g))
    }

    /// Reuses a Gram matrix already computed for `data` under `kernel`.
    pub fn with_gram(loss: Loss, kernel: Kernel, data: Dataset, lambda: f64, gram: Arc<DMatrix<f64>>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be positive, got {lambda}")));
        }
        if gram.nrows() != data.len() || gram.ncols() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: gram.nrows(),
            });
        }
        let positives = data.positives();
        let negatives = data.negatives();
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::param("both labels must be present"));
        }
        if let LossKind::HingeVariant { nu } = loss.kind() {
            let cap = 2.0 / (data.len() as f64 * nu);
            for (name, idx) in [("positive", &positives), ("negative", &negatives)] {
                if (idx.len() as f64) * cap < 1.0 - 1e-12 {
                    return Err(Error::Infeasible(format!(
                        "{} {name} samples with weight cap {cap} cannot sum to one",
                        idx.len()
                    )));
                }
            }
        }
        Ok(DualProblem {
            loss,
            kernel,
            data,
            lambda,
            gram,
            factor: Arc::new(OnceLock::new()),
            positives,
            negatives,
        })
    }

    /// Same data and Gram matrix with a different `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let mut p = DualProblem::with_gram(self.loss, self.kernel, self.data.clone(), lambda, self.gram.clone())?;
        p.factor = self.factor.clone();
        Ok(p)
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn m(&self) -> usize {
        self.data.len()
    }

    pub(crate) fn classes(&self) -> [&[usize]; 2] {
        [&self.positives, &self.negatives]
    }

    /// `Σ_j v_j y_j G_ij` for every `i`: the expansion `Σ v_j y_j k(·, x_j)` at the samples.
    /// `B` with `G = B Bᵀ`, over the positive part of the spectrum.
    pub(crate) fn factor(&self) -> &DMatrix<f64> {
        self.factor.get_or_init(|| {
            let eig = self.gram.as_ref().clone().symmetric_eigen();
            let top = eig.eigenvalues.amax().max(1e-300);
            let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&k| eig.eigenvalues[k] > 1e-14 * top).collect();
            DMatrix::from_fn(self.gram.nrows(), keep.len(), |i, c| {
                eig.eigenvectors[(i, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
            })
        })
    }

    /// Coordinates `Bᵀ (y ∘ α)` of the difference of the two weighted centers.
    pub(crate) fn center(&self, alpha: &[f64]) -> DVector<f64> {
        let yv = DVector::from_iterator(alpha.len(), alpha.iter().zip(self.data.y()).map(|(a, &y)| a * y as f64));
        self.factor().tr_mul(&yv)
    }

    pub(crate) fn signed_gram_apply(&self, v: &[f64]) -> DVector<f64> {
        let yv = DVector::from_iterator(v.len(), v.iter().zip(self.data.y()).map(|(a, &y)| a * y as f64));
        &*self.gram * yv
    }

    /// `(1/m) Σ_{i ∈ idx} ℓ*(m α_i)`, infinite outside the conjugate domain.
    pub(crate) fn level(&self, alpha: &[f64], idx: &[usize]) -> f64 {
        let m = self.m() as f64;
        idx.iter().map(|&i| self.loss.conjugate(m * alpha[i]).to_f64()).sum::<f64>() / m
    }

    /// Dual objective at `α` together with the RKHS distance `‖Σ α_i y_i k(·, x_i)‖`.
    pub fn dual_objective(&self, alpha: &[f64]) -> Result<(f64, f64)> {
        if alpha.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: alpha.len(),
            });
        }
        let z = self.center(alpha).norm();
        Ok((self.level(alpha, &self.positives) + self.level(alpha, &self.negatives) + self.lambda * z, z))
    }

    /// Primal objective `−2ρ + (1/m) Σ ℓ(ρ − y_i(f_i + b))` from decision values `f_i`.
    pub fn primal_objective(&self, f: &[f64], b: f64, rho: f64) -> f64 {
        let m = self.m() as f64;
        -2.0 * rho
            + f.iter()
                .zip(self.data.y())
                .map(|(fi, &y)| self.loss.eval(rho - y as f64 * (fi + b)))
                .sum::<f64>()
                / m
    }

    /// Best `(ρ, b, objective)` for fixed decision values `f_i`.
    pub(crate) fn best_offsets(&self, f: &[f64], loss: &Surrogate) -> (f64, f64, f64) {
        let m = self.m() as f64;
        let cp: Vec<f64> = self.positives.iter().map(|&i| f[i]).collect();
        let cn: Vec<f64> = self.negatives.iter().map(|&i| -f[i]).collect();
        let (sp, vp) = minimize_offset(loss, &cp, m);
        let (sn, vn) = minimize_offset(loss, &cn, m);
        ((sp + sn) / 2.0, (sn - sp) / 2.0, vp + vn)
    }

    /// Checks that `α` lies in both simplices and the conjugate domain.
    pub fn check_dual_feasible(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: alpha.len(),
            });
        }
        for (name, idx) in [("positive", &self.positives), ("negative", &self.negatives)] {
            let sum: f64 = idx.iter().map(|&i| alpha[i]).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Feasibility(format!("{name} weights sum to {sum}, not 1")));
            }
            if let Some(&i) = idx.iter().find(|&&i| alpha[i] < -1e-12) {
                return Err(Error::Feasibility(format!("weight {i} is negative ({})", alpha[i])));
            }
            if !self.level(alpha, idx).is_finite() {
                return Err(Error::Feasibility(format!("{name} weights leave the conjugate domain")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub dual: f64,
    pub primal: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub c_p: f64,
    pub c_n: f64,
    pub objective: f64,
    /// RKHS distance between the two weighted class centers.
    pub z_gap: f64,
    pub iterations: usize,
    /// Last certified relative gap `|P + D| / (1 + |D|)`.
    pub gap: f64,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub f: KernelExpansion,
    pub b: f64,
    pub rho: f64,
    pub objective: f64,
}

/// `f̂ = λ (f̂_p − f̂_n) / ‖f̂_p − f̂_n‖`, or zero when the two centers coincide.
pub fn recover_normal(problem: &DualProblem, sol: &DualSolution, lambda: f64) -> KernelExpansion {
    let anchors = problem.data.x().clone();
    if sol.z_gap <= TOUCH_TOL * lambda {
        return KernelExpansion::zero(problem.kernel, anchors);
    }
    let scale = lambda / sol.z_gap;
    let coefficients = sol
        .alpha
        .iter()
        .zip(problem.data.y())
        .map(|(a, &y)| scale * a * y as f64)
        .collect();
    KernelExpansion {
        kernel: problem.kernel,
        anchors,
        coefficients,
    }
}

/// Primal point induced by dual weights: the recovered normal and the best
/// offsets for it.
pub fn primal_from_dual(problem: &DualProblem, alpha: &[f64]) -> Result<PrimalSolution> {
    let (_, z) = problem.dual_objective(alpha)?;
    let sol = DualSolution {
        alpha: alpha.to_vec(),
        c_p: 0.0,
        c_n: 0.0,
        objective: 0.0,
        z_gap: z,
        iterations: 0,
        gap: f64::NAN,
        converged: false,
        trace: Vec::new(),
    };
    let f = recover_normal(problem, &sol, problem.lambda);
    let values: Vec<f64> = if f.is_zero() {
        vec![0.0; problem.m()]
    } else {
        let g = problem.signed_gram_apply(alpha);
        g.iter().map(|v| v * problem.lambda / z).collect()
    };
    let (rho, b, objective) = problem.best_offsets(&values, &Surrogate::Exact(problem.loss));
    Ok(PrimalSolution { f, b, rho, objective })
}

/// `|P + D|` after checking both points are feasible for `problem`.
pub fn duality_gap(problem: &DualProblem, primal: &PrimalSolution, dual: &DualSolution) -> Result<f64> {
    problem.check_dual_feasible(&dual.alpha)?;
    let norm = primal.f.rkhs_norm()?;
    if norm > problem.lambda * (1.0 + 1e-8) + 1e-12 {
        return Err(Error::Feasibility(format!(
            "‖f‖ = {norm} exceeds lambda = {}",
            problem.lambda
        )));
    }
    let f = primal.f.eval_many(problem.data.x())?;
    let p = problem.primal_objective(&f, primal.b, primal.rho);
    let (d, _) = problem.dual_objective(&dual.alpha)?;
    Ok((p + d).abs())
}
