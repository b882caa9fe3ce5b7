//! Primal oracle: accelerated projected gradient over the coordinates
//! `θ = Λ^{1/2} Uᵀ β` of the kernel expansion, in which the RKHS norm is the
//! Euclidean norm. The offsets `(ρ, b)` are minimized exactly at every
//! evaluation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::offset::Surrogate;
use super::{DualProblem, PrimalSolution};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelExpansion};
use crate::loss::{Loss, LossKind};
use crate::Dataset;

/// Factor `G = B Bᵀ` with `B = U_r Λ_r^{1/2}` over the non-negligible spectrum.
struct Coordinates {
    b: DMatrix<f64>,
    /// Maps `θ` back to expansion coefficients: `U_r Λ_r^{-1/2}`.
    back: DMatrix<f64>,
}

impl Coordinates {
    fn new(problem: &DualProblem) -> Coordinates {
        let b = problem.factor().clone();
        let mut back = b.clone();
        for (mut col, src) in back.column_iter_mut().zip(b.column_iter()) {
            col /= src.norm_squared();
        }
        Coordinates { b, back }
    }
}

#[derive(Clone, Copy)]
enum Regularizer {
    /// `‖θ‖ ≤ λ`
    Ball(f64),
    /// `‖θ‖² / ν`
    Ridge(f64),
}

impl Regularizer {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        match *self {
            Regularizer::Ball(_) => 0.0,
            Regularizer::Ridge(nu) => theta.norm_squared() / nu,
        }
    }

    fn prox(&self, v: DVector<f64>, t: f64) -> DVector<f64> {
        match *self {
            Regularizer::Ball(lambda) => {
                let n = v.norm();
                if n > lambda {
                    v * (lambda / n)
                } else {
                    v
                }
            }
            Regularizer::Ridge(nu) => v / (1.0 + 2.0 * t / nu),
        }
    }
}

struct Objective<'a> {
    problem: &'a DualProblem,
    coords: &'a Coordinates,
    reg: Regularizer,
}

impl Objective<'_> {
    /// Value (offsets minimized out) and gradient in `θ`.
    fn eval(&self, theta: &DVector<f64>, loss: &Surrogate) -> (f64, DVector<f64>) {
        let f = &self.coords.b * theta;
        let (rho, b, v) = self.problem.best_offsets(f.as_slice(), loss);
        let m = self.problem.m() as f64;
        let y = self.problem.data().y();
        let gf = DVector::from_iterator(
            f.len(),
            f.iter().zip(y).map(|(fi, &yi)| {
                let yi = yi as f64;
                -yi * loss.slope(rho - yi * (fi + b)) / m
            }),
        );
        (v + self.reg.value(theta), self.coords.b.tr_mul(&gf))
    }

    fn value(&self, theta: &DVector<f64>, loss: &Surrogate) -> f64 {
        let f = &self.coords.b * theta;
        self.problem.best_offsets(f.as_slice(), loss).2 + self.reg.value(theta)
    }

    /// FISTA with backtracking and function-value restart from `start`.
    /// Returns the iterate with the lowest value of `report`.
    fn minimize(
        &self,
        start: DVector<f64>,
        loss: &Surrogate,
        report: &Surrogate,
        tol: f64,
        max_iter: usize,
    ) -> (DVector<f64>, f64) {
        let mut x = start;
        let mut fx = self.value(&x, loss);
        let mut best = (x.clone(), self.value(&x, report));
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut lip = 1.0f64;
        for _ in 0..max_iter {
            let (fy, g) = self.eval(&y, loss);
            let fy_smooth = fy - self.reg.value(&y);
            let (z, fz) = loop {
                let z = self.reg.prox(&y - &g * (1.0 / lip), 1.0 / lip);
                let d = &z - &y;
                let fz = self.value(&z, loss);
                let fz_smooth = fz - self.reg.value(&z);
                if fz_smooth <= fy_smooth + g.dot(&d) + 0.5 * lip * d.norm_squared() + 1e-15 * fy_smooth.abs()
                    || lip > 1e30
                {
                    break (z, fz);
                }
                lip *= 2.0;
            };
            let step = (&z - &y).norm() * lip;
            if fz > fx && t > 1.0 {
                t = 1.0;
                y.clone_from(&x);
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &z + (&z - &x) * ((t - 1.0) / t_next);
            let change = (fx - fz).abs();
            x = z;
            fx = fz;
            t = t_next;
            lip *= 0.95;
            let r = if std::ptr::eq(loss, report) { fz } else { self.value(&x, report) };
            if r < best.1 {
                best = (x.clone(), r);
            }
            if step <= tol && change <= tol * (1.0 + fx.abs()) {
                break;
            }
        }
        best
    }

    /// Minimizes with the exact loss, or for the hinge through a sequence of
    /// Moreau envelopes with shrinking width.
    fn solve(&self, tol: f64) -> (DVector<f64>, f64) {
        let exact = Surrogate::Exact(self.problem.loss());
        let start = DVector::zeros(self.coords.b.ncols());
        let cap = 200_000;
        match self.problem.loss().kind() {
            LossKind::HingeVariant { nu } => {
                let mut theta = start;
                let mut best = (theta.clone(), self.value(&theta, &exact));
                for k in 0..=10 {
                    let smooth = Surrogate::SmoothHinge {
                        slope: 2.0 / nu,
                        mu: 10f64.powi(-k),
                    };
                    let (th, v) = self.minimize(theta.clone(), &smooth, &exact, tol * 1e-2, cap / 10);
                    if v < best.1 {
                        best = (th.clone(), v);
                    }
                    theta = th;
                }
                best
            }
            _ => self.minimize(start, &exact, &exact, tol * 1e-2, cap),
        }
    }
}

fn finish(problem: &DualProblem, coords: &Coordinates, theta: &DVector<f64>) -> (KernelExpansion, f64, f64, f64) {
    let beta = &coords.back * theta;
    let f = &coords.b * theta;
    let (rho, b, objective) = problem.best_offsets(f.as_slice(), &Surrogate::Exact(problem.loss()));
    let expansion = KernelExpansion {
        kernel: problem.kernel(),
        anchors: problem.data().x().clone(),
        coefficients: beta.as_slice().to_vec(),
    };
    (expansion, rho, b, objective)
}

/// Decision values on the training samples after running the primal
/// iteration from `theta`, given in the coordinates of the problem's factor.
pub(crate) fn refine(problem: &DualProblem, theta: DVector<f64>, tol: f64, max_iter: usize) -> Vec<f64> {
    let coords = Coordinates::new(problem);
    let obj = Objective {
        problem,
        coords: &coords,
        reg: Regularizer::Ball(problem.lambda()),
    };
    let exact = Surrogate::Exact(problem.loss());
    let (theta, _) = obj.minimize(theta, &exact, &exact, tol, max_iter);
    (&coords.b * theta).as_slice().to_vec()
}

/// `min −2ρ + (1/m) Σ ℓ(ρ − y_i(f(x_i) + b))` over `‖f‖ ≤ λ`.
pub fn solve_primal(problem: &DualProblem, tol: f64) -> Result<PrimalSolution> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol must be positive, got {tol}")));
    }
    let coords = Coordinates::new(problem);
    let obj = Objective {
        problem,
        coords: &coords,
        reg: Regularizer::Ball(problem.lambda()),
    };
    let (theta, _) = obj.solve(tol);
    let (f, rho, b, objective) = finish(problem, &coords, &theta);
    Ok(PrimalSolution { f, b, rho, objective })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuSvmSolution {
    pub f: KernelExpansion,
    pub b: f64,
    pub rho: f64,
    /// `(1/2)‖f‖² − νρ + (1/m) Σ max{ρ − y_i(f(x_i) + b), 0}`
    pub objective: f64,
}

/// ν-SVM in the form `‖f‖²/ν − 2ρ + (1/m) Σ max{2(ρ − y_i(f_i + b))/ν, 0}`,
/// which is the standard objective scaled by `2/ν`.
pub fn nu_svm(kernel: Kernel, data: Dataset, nu: f64, tol: f64) -> Result<NuSvmSolution> {
    let problem = DualProblem::new(Loss::hinge(nu)?, kernel, data, 1.0)?;
    let coords = Coordinates::new(&problem);
    let obj = Objective {
        problem: &problem,
        coords: &coords,
        reg: Regularizer::Ridge(nu),
    };
    let (theta, _) = obj.solve(tol);
    let (f, rho, b, scaled) = finish(&problem, &coords, &theta);
    let objective = nu / 2.0 * (scaled + theta.norm_squared() / nu);
    Ok(NuSvmSolution { f, b, rho, objective })
}
