//! Numerical checks of the calibration function
//! `ψ(θ, ρ) = ℓ(ρ) − inf_z {((1+θ)/2) ℓ(ρ−z) + ((1−θ)/2) ℓ(ρ+z)}`
//! and of the sufficient conditions used to bound it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::oracle::golden_max;

/// Largest inner minimizer searched for before giving up.
pub const BRACKET_LIMIT: f64 = 1e6;

/// Slack for "non-decreasing" in the monotonicity scan.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiEval {
    pub theta: f64,
    pub rho: f64,
    pub value: f64,
}

fn require_calibrated(loss: &Loss) -> Result<()> {
    if loss.is_smooth() {
        Ok(())
    } else {
        Err(Error::OutsideRegime(format!("{loss} has no positive slope at the origin")))
    }
}

/// Lowest `ρ` of interest, `−ℓ(0)/2`.
pub fn rho_floor(loss: &Loss) -> f64 {
    -loss.eval(0.0) / 2.0
}

pub fn psi(loss: &Loss, theta: f64, rho: f64) -> Result<f64> {
    require_calibrated(loss)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::param(format!("theta must lie in [0, 1], got {theta}")));
    }
    if !(rho >= rho_floor(loss) - 1e-12) || !rho.is_finite() {
        return Err(Error::param(format!("rho must be at least {}, got {rho}", rho_floor(loss))));
    }
    if theta == 0.0 {
        return Ok(0.0);
    }
    let (wl, wr) = ((1.0 + theta) / 2.0, (1.0 - theta) / 2.0);
    let weighted = |w: f64, v: f64| if w == 0.0 { 0.0 } else { w * v };
    let inner = |z: f64| wl * loss.eval(rho - z) + weighted(wr, loss.eval(rho + z));
    let slope = |z: f64| -wl * loss.derivative(rho - z) + weighted(wr, loss.derivative(rho + z));
    // the slope at 0 is −θ ℓ'(ρ) ≤ 0, so the minimizer is non-negative
    let mut hi = 1.0;
    while slope(hi) < 0.0 {
        hi *= 2.0;
        if hi > BRACKET_LIMIT {
            return Err(Error::Divergence);
        }
    }
    let (_, neg) = golden_max(|z| -inner(z), 0.0, hi, 1e-10);
    Ok((loss.eval(rho) + neg).max(0.0))
}

/// `ψ` on the product of two grids, θ-major.
pub fn psi_grid(loss: &Loss, thetas: &[f64], rhos: &[f64]) -> Result<Vec<PsiEval>> {
    let cells: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| rhos.iter().map(move |&r| (t, r))).collect();
    cells
        .par_iter()
        .map(|&(theta, rho)| Ok(PsiEval { theta, rho, value: psi(loss, theta, rho)? }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub theta: f64,
    pub rho_lo: f64,
    pub rho_hi: f64,
    pub psi_lo: f64,
    pub psi_hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub violations: Vec<Violation>,
}

impl MonotoneReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Pairs `ρ₁ < ρ₂` at equal `θ` where the table decreases by more than
/// [`MONOTONE_TOL`].
pub fn scan_violations(table: &[PsiEval]) -> MonotoneReport {
    let mut violations = Vec::new();
    for (i, a) in table.iter().enumerate() {
        for b in &table[i + 1..] {
            if a.theta != b.theta || a.rho == b.rho {
                continue;
            }
            let (lo, hi) = if a.rho < b.rho { (a, b) } else { (b, a) };
            if lo.value > hi.value + MONOTONE_TOL {
                violations.push(Violation {
                    theta: lo.theta,
                    rho_lo: lo.rho,
                    rho_hi: hi.rho,
                    psi_lo: lo.value,
                    psi_hi: hi.value,
                });
            }
        }
    }
    MonotoneReport { violations }
}

/// Sampled check that `ψ(θ, ·)` is non-decreasing on `ρ ≥ −ℓ(0)/2`.
pub fn psi_monotone_check(loss: &Loss, thetas: &[f64], rhos: &[f64]) -> Result<MonotoneReport> {
    Ok(scan_violations(&psi_grid(loss, thetas, rhos)?))
}

/// Quadratic lower bound `((4w − 1) / (32 w²)) θ²` on `ψ` for the
/// estimation-error loss.
pub fn esterr_psi_lower_bound(h: f64, w: f64, theta: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::param(format!("h must be non-negative, got {h}")));
    }
    if !(w > 0.5) {
        return Err(Error::param(format!("the bound needs w > 1/2, got {w}")));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::param(format!("theta must lie in [0, 1), got {theta}")));
    }
    Ok((4.0 * w - 1.0) / (32.0 * w * w) * theta * theta)
}

/// `(ℓ(ρ+z) + ℓ(ρ−z) − 2ℓ(ρ)) / (z ℓ'(ρ))`, and 0 at `z = 0`.
pub fn xi(loss: &Loss, z: f64, rho: f64) -> Result<f64> {
    require_calibrated(loss)?;
    if !(z >= 0.0) {
        return Err(Error::param(format!("z must be non-negative, got {z}")));
    }
    if !(rho >= rho_floor(loss) - 1e-12) {
        return Err(Error::param(format!("rho must be at least {}, got {rho}", rho_floor(loss))));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let d = loss.derivative(rho);
    if d <= 0.0 {
        return Err(Error::OutsideRegime(format!("{loss} is flat at {rho}")));
    }
    Ok((loss.eval(rho + z) + loss.eval(rho - z) - 2.0 * loss.eval(rho)) / (z * d))
}

/// `(z, ρ)` samples where `ξ(z, ρ)` exceeds `bound(z)`.
pub fn xi_dominance<F: Fn(f64) -> f64>(loss: &Loss, zs: &[f64], rhos: &[f64], bound: F) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for &z in zs {
        for &rho in rhos {
            if xi(loss, z, rho)? > bound(z) + 1e-12 {
                out.push((z, rho));
            }
        }
    }
    Ok(out)
}

/// Midpoint convexity of `1/ℓ'` over pairs of grid points where `ℓ' > 0`.
/// Returns the pairs that fail.
pub fn reciprocal_slope_convexity(loss: &Loss, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    require_calibrated(loss)?;
    let inv = |z: f64| 1.0 / loss.derivative(z);
    let pts: Vec<f64> = grid.iter().copied().filter(|&z| loss.derivative(z) > 0.0).collect();
    let mut out = Vec::new();
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            let mid = inv(0.5 * (a + b));
            let avg = 0.5 * (inv(a) + inv(b));
            if mid > avg * (1.0 + 1e-12) + 1e-12 {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    fn grid_psi(loss: &Loss, theta: f64, rho: f64) -> f64 {
        let inner = |z: f64| (1.0 + theta) / 2.0 * loss.eval(rho - z) + (1.0 - theta) / 2.0 * loss.eval(rho + z);
        let coarse = (0..=20_000).map(|i| -10.0 + 20.0 * i as f64 / 20_000.0);
        let z0 = coarse.min_by(|a, b| inner(*a).total_cmp(&inner(*b))).unwrap();
        let fine = (0..=20_000).map(|i| z0 - 1e-3 + 2e-3 * i as f64 / 20_000.0);
        let best = fine.map(inner).fold(f64::INFINITY, f64::min);
        loss.eval(rho) - best
    }

    #[test]
    fn zero_theta_gives_zero() {
        for loss in [Loss::truncated_quadratic(), Loss::exponential(), Loss::estimation_error(1.0, 1.0).unwrap()] {
            assert_eq!(psi(&loss, 0.0, 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn exponential_example() {
        let v = psi(&Loss::exponential(), 0.6, 0.0).unwrap();
        assert!((v - 0.2).abs() < 1e-9, "{v}");
    }

    #[test]
    fn truncated_quadratic_against_grid() {
        let l = Loss::truncated_quadratic();
        let v = psi(&l, 0.5, -0.5).unwrap();
        assert!((v - grid_psi(&l, 0.5, -0.5)).abs() < 1e-8);
    }

    #[test]
    fn hinge_is_excluded() {
        let h = Loss::hinge(0.5).unwrap();
        assert!(matches!(psi(&h, 0.5, 0.0), Err(Error::OutsideRegime(_))));
        assert!(matches!(xi(&h, 1.0, 0.0), Err(Error::OutsideRegime(_))));
    }

    #[test]
    fn exponential_at_full_theta() {
        // the inner infimum is 0, approached as z → ∞
        let v = psi(&Loss::exponential(), 1.0, 0.5).unwrap();
        assert!((v - 0.5f64.exp()).abs() < 1e-9, "{v}");
    }

    #[test]
    fn monotone_for_calibrated_losses() {
        let thetas = linspace(0.0, 0.95, 20);
        for loss in [Loss::truncated_quadratic(), Loss::exponential()] {
            let rhos = linspace(rho_floor(&loss), 10.0, 20);
            let r = psi_monotone_check(&loss, &thetas, &rhos).unwrap();
            assert!(r.is_clean(), "{loss}: {:?}", r.violations.first());
        }
    }

    #[test]
    fn scan_flags_decreasing_table() {
        let table: Vec<PsiEval> = (0..5)
            .map(|i| PsiEval {
                theta: 0.5,
                rho: i as f64,
                value: 1.0 - 0.1 * i as f64,
            })
            .collect();
        assert_eq!(scan_violations(&table).violations.len(), 10);
    }

    #[test]
    fn esterr_bound_examples() {
        assert!((esterr_psi_lower_bound(1.0, 1.0, 0.4).unwrap() - 0.015).abs() < 1e-15);
        assert_eq!(esterr_psi_lower_bound(1.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(esterr_psi_lower_bound(1.0, 0.5, 0.3).is_err());
        let l = Loss::estimation_error(1.0, 1.0).unwrap();
        for rho in [rho_floor(&l), 0.0, 1.0, 5.0] {
            assert!(psi(&l, 0.4, rho).unwrap() >= 0.015, "rho {rho}");
        }
    }

    #[test]
    fn xi_examples() {
        let tq = Loss::truncated_quadratic();
        assert_eq!(xi(&tq, 0.0, 0.0).unwrap(), 0.0);
        assert!((xi(&tq, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let l = Loss::estimation_error(1.0, 1.0).unwrap();
        let zs = linspace(0.05, 5.0, 40);
        let rhos = linspace(rho_floor(&l), 10.0, 60);
        assert!(xi_dominance(&l, &zs, &rhos, |z| 2.0 * z).unwrap().is_empty());
    }

    #[test]
    fn reciprocal_slope_is_convex() {
        let grid = linspace(-0.9, 10.0, 40);
        for loss in [Loss::truncated_quadratic(), Loss::exponential()] {
            assert!(reciprocal_slope_convexity(&loss, &grid).unwrap().is_empty(), "{loss}");
        }
    }
}
