//! Accelerated proximal gradient on the dual. The RKHS norm is the smooth
//! part; the separable conjugate term and the two simplex constraints are
//! handled together in the proximal step.

use nalgebra::DVector;

use super::offset::Surrogate;
use super::primal::refine;
use super::{primal_from_dual, DualProblem, DualSolution, TracePoint, NORM_SMOOTHING};
use crate::error::Result;
use crate::loss::{Loss, LossKind};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Stop once `|P + D| ≤ tol · (1 + |D|)`.
    pub tol: f64,
    /// Defaults to `max(100 m, 10000)`.
    pub max_iter: Option<usize>,
    pub warm_start: Option<Vec<f64>>,
    /// Iterations between duality-gap checks.
    pub check_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-7,
            max_iter: None,
            warm_start: None,
            check_every: 10,
        }
    }
}

pub fn solve_dual(problem: &DualProblem, tol: f64) -> Result<DualSolution> {
    solve_dual_with(
        problem,
        &SolveOptions {
            tol,
            ..SolveOptions::default()
        },
    )
}

/// `argmin_a (a − u)²/(2t) + (1/m) ℓ*(m a)` over `a ≥ 0`.
fn scalar_prox(loss: &Loss, m: f64, u: f64, t: f64) -> f64 {
    match loss.kind() {
        LossKind::HingeVariant { nu } => u.clamp(0.0, 2.0 / (m * nu)),
        LossKind::TruncatedQuadratic => ((u + t) / (1.0 + t * m / 2.0)).max(0.0),
        LossKind::EstimationError { h, w } => {
            let kink = 1.0 / (m * w);
            let q = 2.0 * m * w * w;
            let left = (u + 2.0 * t * w * (1.0 + h)) / (1.0 + t * q);
            if left <= kink {
                return left.max(0.0);
            }
            let right = (u + 2.0 * t * w * (1.0 - h)) / (1.0 + t * q);
            if right >= kink {
                right
            } else {
                kink
            }
        }
        LossKind::Exponential => exp_prox(m, u, t),
    }
}

// (a − u)/t + ln(m a) = 0, solved for s = ln a by Newton from the right of
// the root, where the convex increasing residual makes the iteration monotone.
fn exp_prox(m: f64, u: f64, t: f64) -> f64 {
    let k = u / t - m.ln();
    let residual = |s: f64| s.exp() / t + s - k;
    let mut s = if k > 0.0 { k.min((t * k).ln().max(0.0)) } else { k };
    if residual(s) < 0.0 {
        s = k;
    }
    for _ in 0..100 {
        let e = s.exp();
        let step = (e / t + s - k) / (e / t + 1.0);
        s -= step;
        if step.abs() <= 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    s.exp()
}

/// Proximal step on one class: minimizes `Σ (a_i − v_i)²/(2t) + g(a_i)` subject
/// to `Σ a_i = 1`, by bisection on the shift of the multiplier.
fn class_prox(loss: &Loss, m: f64, v: &[f64], t: f64, out: &mut [f64]) {
    let sum_at = |sigma: f64, out: &mut [f64]| -> f64 {
        let mut s = 0.0;
        for (o, &vi) in out.iter_mut().zip(v) {
            *o = scalar_prox(loss, m, vi + sigma, t);
            s += *o;
        }
        s
    };
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut buf_lo = vec![0.0; v.len()];
    let mut buf_hi = vec![0.0; v.len()];

    let mut width = 1.0;
    let mut lo = -vmax - width;
    let mut s_lo = sum_at(lo, &mut buf_lo);
    while s_lo > 1.0 {
        width *= 2.0;
        lo = -vmax - width;
        s_lo = sum_at(lo, &mut buf_lo);
    }
    width = 1.0;
    let mut hi = -vmin + width;
    let mut s_hi = sum_at(hi, &mut buf_hi);
    let mut guard = 0;
    while s_hi < 1.0 && guard < 200 {
        width *= 2.0;
        hi = -vmin + width;
        s_hi = sum_at(hi, &mut buf_hi);
        guard += 1;
    }
    if s_hi < 1.0 {
        // caps sum to one up to rounding
        out.copy_from_slice(&buf_hi);
        return;
    }
    let mut mid_buf = vec![0.0; v.len()];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = sum_at(mid, &mut mid_buf);
        if s <= 1.0 {
            lo = mid;
            s_lo = s;
            std::mem::swap(&mut buf_lo, &mut mid_buf);
        } else {
            hi = mid;
            s_hi = s;
            std::mem::swap(&mut buf_hi, &mut mid_buf);
        }
        if s == 1.0 {
            break;
        }
    }
    let theta = if s_hi > s_lo {
        ((1.0 - s_lo) / (s_hi - s_lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    for ((o, a), b) in out.iter_mut().zip(&buf_lo).zip(&buf_hi) {
        *o = a + theta * (b - a);
    }
}

struct Workspace<'a> {
    problem: &'a DualProblem,
    y: Vec<f64>,
}

impl Workspace<'_> {
    fn prox(&self, v: &[f64], t: f64) -> Vec<f64> {
        let m = self.problem.m() as f64;
        let mut out = vec![0.0; v.len()];
        for idx in self.problem.classes() {
            let vv: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
            let mut oo = vec![0.0; idx.len()];
            class_prox(&self.problem.loss, m, &vv, t, &mut oo);
            for (&i, o) in idx.iter().zip(oo) {
                out[i] = o;
            }
        }
        out
    }

    fn smooth(&self, v: &DVector<f64>, eps: f64) -> f64 {
        self.problem.lambda * (v.norm_squared() + eps * eps).sqrt()
    }

    fn separable(&self, alpha: &[f64]) -> f64 {
        let [p, n] = self.problem.classes();
        self.problem.level(alpha, p) + self.problem.level(alpha, n)
    }
}

fn initial_point(problem: &DualProblem, warm: Option<&Vec<f64>>) -> Vec<f64> {
    if let Some(w) = warm {
        if problem.check_dual_feasible(w).is_ok() {
            return w.clone();
        }
    }
    let mut alpha = vec![0.0; problem.m()];
    for idx in problem.classes() {
        let v = 1.0 / idx.len() as f64;
        for &i in idx {
            alpha[i] = v;
        }
    }
    alpha
}

/// Relative duality gap at `α` and the smoothed-problem gap for width `eps`.
struct Certificate {
    gap: f64,
    smoothed_gap: f64,
}

/// For a differentiable loss the dual point paired with decision values `f`
/// is `α_i = ℓ'(ρ − y_i(f_i + b)) / m`, normalized per class.
fn dual_from_values(problem: &DualProblem, f: &[f64]) -> Option<Vec<f64>> {
    let loss = problem.loss();
    if !loss.is_smooth() {
        return None;
    }
    let (rho, b, _) = problem.best_offsets(f, &Surrogate::Exact(loss));
    let y = problem.data().y();
    let mut alpha: Vec<f64> = f
        .iter()
        .zip(y)
        .map(|(fi, &yi)| loss.derivative(rho - yi as f64 * (fi + b)).max(0.0))
        .collect();
    for idx in problem.classes() {
        let sum: f64 = idx.iter().map(|&i| alpha[i]).sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return None;
        }
        for &i in idx {
            alpha[i] /= sum;
        }
    }
    Some(alpha)
}

/// Runs the primal iteration from the candidate paired with `α` and reads a
/// dual point off the result. Returns that point and the decision values it
/// came from when it lowers the dual objective.
fn polish(problem: &DualProblem, alpha: &[f64], v: &DVector<f64>, eps: f64, tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    if !problem.loss().is_smooth() {
        return None;
    }
    let theta = v * (problem.lambda() / (v.norm_squared() + eps * eps).sqrt());
    let f = refine(problem, theta, tol * 1e-2, 10 * problem.m().max(1000));
    let cand = dual_from_values(problem, &f)?;
    let current = problem.dual_objective(alpha).ok()?.0;
    let (d, _) = problem.dual_objective(&cand).ok()?;
    (d < current && problem.check_dual_feasible(&cand).is_ok()).then_some((cand, f))
}

fn certify(
    problem: &DualProblem,
    alpha: &[f64],
    v: &DVector<f64>,
    eps: f64,
    extra: Option<&[f64]>,
    it: usize,
    trace: &mut Vec<TracePoint>,
) -> Result<Certificate> {
    let [p, n] = problem.classes();
    let lambda = problem.lambda();
    let sep = problem.level(alpha, p) + problem.level(alpha, n);
    let sq = v.norm_squared();
    let d_eps = sep + lambda * (sq + eps * eps).sqrt();
    let scale = lambda / (sq + eps * eps).sqrt();
    let f: Vec<f64> = (problem.factor() * v).iter().map(|h| h * scale).collect();
    let p_eps = problem.best_offsets(&f, &Surrogate::Exact(problem.loss())).2;
    let mut p_best = p_eps.min(primal_from_dual(problem, alpha)?.objective);
    if let Some(f) = extra {
        p_best = p_best.min(problem.best_offsets(f, &Surrogate::Exact(problem.loss())).2);
    }
    let d = sep + lambda * sq.sqrt();
    trace.push(TracePoint {
        iteration: it,
        dual: d,
        primal: p_best,
        gap: (p_best + d).abs(),
    });
    Ok(Certificate {
        gap: (p_best + d).abs() / (1.0 + d.abs()),
        smoothed_gap: ((p_eps + d_eps).abs() - lambda * eps).max(0.0) / (1.0 + d.abs()),
    })
}

/// Accelerated proximal gradient with backtracking and function-value
/// restart. The norm is smoothed with a width that starts at the data scale
/// and shrinks tenfold whenever the smoothed problem is solved, down to
/// [`NORM_SMOOTHING`].
pub fn solve_dual_with(problem: &DualProblem, opts: &SolveOptions) -> Result<DualSolution> {
    let m = problem.m();
    let cap = opts.max_iter.unwrap_or((100 * m).max(10_000));
    let ws = Workspace {
        problem,
        y: problem.data().y().iter().map(|&v| v as f64).collect(),
    };
    let lambda = problem.lambda();
    let diag_max = problem.gram().diagonal().amax().max(1e-300);
    let mut eps = (0.1 * diag_max.sqrt()).max(NORM_SMOOTHING);

    let mut x = initial_point(problem, opts.warm_start.as_ref());
    let factor = problem.factor();
    let mut vx = problem.center(&x);
    let mut fx = ws.separable(&x) + ws.smooth(&vx, eps);
    let mut yv = x.clone();
    let mut vy = vx.clone();
    let mut t = 1.0f64;
    let mut lip = lambda * diag_max / (vx.norm_squared() + eps * eps).sqrt();

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut cert = certify(problem, &x, &vx, eps, None, 0, &mut trace)?;
    let mut converged = cert.gap <= opts.tol;

    while !converged && iterations < cap {
        iterations += 1;
        let s = (vy.norm_squared() + eps * eps).sqrt();
        let fy = lambda * s;
        let hy = factor * &vy;
        let grad: Vec<f64> = ws.y.iter().zip(hy.iter()).map(|(yi, hi)| lambda * yi * hi / s).collect();
        let (z, vz, fz_smooth) = loop {
            let step = 1.0 / lip;
            let w: Vec<f64> = yv.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let z = ws.prox(&w, step);
            let vz = problem.center(&z);
            let fz = ws.smooth(&vz, eps);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((zi, yi), gi) in z.iter().zip(&yv).zip(&grad) {
                let d = zi - yi;
                lin += gi * d;
                sq += d * d;
            }
            if fz <= fy + lin + 0.5 * lip * sq + 1e-15 * fy || lip > 1e30 {
                break (z, vz, fz);
            }
            lip *= 2.0;
        };
        let fz = ws.separable(&z) + fz_smooth;
        if fz > fx && t > 1.0 {
            // momentum overshoot: restart from the last accepted point
            t = 1.0;
            yv.clone_from(&x);
            vy.clone_from(&vx);
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..m {
            yv[i] = z[i] + beta * (z[i] - x[i]);
        }
        vy = &vz + (&vz - &vx) * beta;
        x = z;
        vx = vz;
        fx = fz;
        t = t_next;
        lip *= 0.9;

        if iterations % opts.check_every.max(1) == 0 || iterations == cap {
            cert = certify(problem, &x, &vx, eps, None, iterations, &mut trace)?;
            if cert.gap <= opts.tol {
                converged = true;
            } else if eps > NORM_SMOOTHING && cert.smoothed_gap <= opts.tol {
                if let Some((a, f)) = polish(problem, &x, &vx, eps, opts.tol) {
                    x = a;
                    vx = problem.center(&x);
                    cert = certify(problem, &x, &vx, eps, Some(&f), iterations, &mut trace)?;
                    if cert.gap <= opts.tol {
                        converged = true;
                        break;
                    }
                }
                eps = (eps * 0.1).max(NORM_SMOOTHING);
                fx = ws.separable(&x) + ws.smooth(&vx, eps);
                t = 1.0;
                yv.clone_from(&x);
                vy.clone_from(&vx);
            }
        }
    }

    if !converged {
        log::warn!("dual solver stopped at the iteration cap {cap} with relative gap {:e}", cert.gap);
    }
    let (objective, z_gap) = problem.dual_objective(&x)?;
    let [p, n] = problem.classes();
    Ok(DualSolution {
        c_p: problem.level(&x, p),
        c_n: problem.level(&x, n),
        objective,
        z_gap,
        iterations,
        gap: cert.gap,
        converged,
        trace,
        alpha: x,
    })
}
