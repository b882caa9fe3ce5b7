//! Brute-force Legendre–Fenchel transforms on a grid.
//!
//! These routines only ever call the function they are given; they share no
//! code with the closed forms in [`crate::loss`], which is what makes them
//! usable as an oracle for those closed forms.

use std::cell::RefCell;

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Uniform grid of `n` points on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lo: f64,
    hi: f64,
    n: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::param(format!("grid needs lo < hi, got [{lo}, {hi}]")));
        }
        if n < 3 {
            return Err(Error::param(format!("grid needs at least 3 points, got {n}")));
        }
        Ok(GridSpec { lo, hi, n })
    }

    /// `[-50, 50] × 8001`, suitable for losses of polynomial growth.
    pub fn polynomial_default() -> Self {
        GridSpec {
            lo: -50.0,
            hi: 50.0,
            n: 8001,
        }
    }

    /// `[-50, 8] × 8001`; keeps `e^z` well inside `f64` range.
    pub fn exponential_default() -> Self {
        GridSpec {
            lo: -50.0,
            hi: 8.0,
            n: 8001,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.point(i))
    }
}

/// Maximizes a concave function on `[a, b]` by golden-section search.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for x in [a, b] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// `sup_z {α z − f(z)}` over the grid, refined by golden-section search
/// around the best grid point.
///
/// Fails with [`Error::BoundaryAttained`] when the objective is still
/// increasing at either end of the grid.
pub fn numeric_conjugate<F: Fn(f64) -> f64>(f: F, grid: &GridSpec, alpha: f64) -> Result<f64> {
    let obj = |z: f64| alpha * z - f(z);
    let n = grid.len();
    let (mut k, mut best) = (0usize, f64::NEG_INFINITY);
    for i in 0..n {
        let v = obj(grid.point(i));
        if v > best {
            best = v;
            k = i;
        }
    }
    if !best.is_finite() {
        return Err(Error::param(format!("function not finite on the grid at alpha = {alpha}")));
    }
    // A flat run reaching the boundary is fine; a strict increase is not.
    let flat = |a: f64, b: f64| a - b <= 1e-12 * (1.0 + a.abs());
    if k == 0 {
        if !flat(best, obj(grid.point(1))) {
            return Err(Error::BoundaryAttained { at: grid.lo() });
        }
        k = 1;
    } else if k == n - 1 {
        if !flat(best, obj(grid.point(n - 2))) {
            return Err(Error::BoundaryAttained { at: grid.hi() });
        }
        k = n - 2;
    }
    let (_, refined) = golden_max(obj, grid.point(k - 1), grid.point(k + 1), 1e-10);
    Ok(refined.max(best))
}

/// `sup_α {α z − f*(α)}` with `f*` itself computed by [`numeric_conjugate`].
///
/// The search range for `α` is the span of finite-difference slopes of `f`
/// on a neighbourhood of `z`, which contains every maximizer for convex `f`.
pub fn numeric_biconjugate<F: Fn(f64) -> f64>(f: F, grid: &GridSpec, z: f64) -> Result<f64> {
    if z <= grid.lo() || z >= grid.hi() {
        return Err(Error::param(format!("z = {z} outside the grid interior")));
    }
    let span = (grid.hi() - grid.lo()) / 8.0;
    let h = grid.step();
    let left = (z - span).max(grid.lo() + 2.0 * h);
    let right = (z + span).min(grid.hi() - 2.0 * h);
    let slope_lo = (f(left) - f(left - h)) / h;
    let slope_hi = (f(right + h) - f(right)) / h;

    let failure = RefCell::new(None);
    let obj = |a: f64| match numeric_conjugate(&f, grid, a) {
        Ok(c) => a * z - c,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NEG_INFINITY
        }
    };
    let (_, best) = golden_max(obj, slope_lo, slope_hi, 1e-12 * (1.0 + slope_hi.abs()));
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tq(z: f64) -> f64 {
        let t = (1.0 + z).max(0.0);
        t * t
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1.0, 0.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 2).is_err());
        let g = GridSpec::new(-1.0, 1.0, 5).unwrap();
        let pts: Vec<f64> = g.points().collect();
        assert_eq!(pts, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn conjugate_examples() {
        let g = GridSpec::new(-10.0, 10.0, 2001).unwrap();
        let half_sq = numeric_conjugate(|z| z * z / 2.0, &g, 3.0).unwrap();
        assert!((half_sq - 4.5).abs() < 1e-9);
        let c = numeric_conjugate(tq, &g, 2.0).unwrap();
        assert!((c + 1.0).abs() < 1e-9);
        let g = GridSpec::new(-30.0, 5.0, 4001).unwrap();
        let c = numeric_conjugate(f64::exp, &g, 1.0).unwrap();
        assert!((c + 1.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_attainment_is_reported() {
        let g = GridSpec::new(-10.0, 10.0, 2001).unwrap();
        // alpha = 2.5 exceeds every slope of z²/20 on the grid
        let err = numeric_conjugate(|z| z * z / 20.0, &g, 2.5).unwrap_err();
        assert!(matches!(err, Error::BoundaryAttained { at } if at == 10.0));
        assert!(numeric_conjugate(f64::exp, &g, -1.0).is_err());
    }

    #[test]
    fn biconjugate_examples() {
        let g = GridSpec::polynomial_default();
        assert!((numeric_biconjugate(tq, &g, 0.0).unwrap() - 1.0).abs() < 1e-6);
        assert!((numeric_biconjugate(f64::abs, &g, 0.3).unwrap() - 0.3).abs() < 1e-6);
        // u(z) for h = 1, w = 1 has u(1) = 1 + 2 + 1 on the middle branch
        let u = |z: f64| {
            let h = 1.0;
            if z <= -2.0 * h - 2.0 {
                0.0
            } else if z <= -2.0 * h {
                (z / 2.0 + 1.0 + h).powi(2)
            } else if z <= 2.0 * h {
                z + 2.0 * h + 1.0
            } else {
                z * z / 4.0 + z * (1.0 - h) + (1.0 + h).powi(2)
            }
        };
        assert!((numeric_biconjugate(u, &g, 1.0).unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn numeric_conjugate_is_convex_in_alpha() {
        let g = GridSpec::polynomial_default();
        for i in 1..40 {
            let a = 0.1 * i as f64;
            let b = a + 0.37;
            let fa = numeric_conjugate(tq, &g, a).unwrap();
            let fb = numeric_conjugate(tq, &g, b).unwrap();
            let fm = numeric_conjugate(tq, &g, (a + b) / 2.0).unwrap();
            assert!(fm <= (fa + fb) / 2.0 + 1e-9);
        }
    }
}
