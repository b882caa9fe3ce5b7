//! Convex non-decreasing margin losses and their closed-form conjugates.
//!
//! Every loss here is closed, convex, non-decreasing and non-negative, so its
//! conjugate `ℓ*(α) = sup_z {αz − ℓ(z)}` is `+∞` for `α < 0` and satisfies
//! `ℓ*(0) = 0`. The conjugate's effective domain therefore always starts at 0.

use std::fmt;
use std::ops::Add;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real number or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::PosInf => None,
        }
    }

    /// Lossy view as `f64`, mapping `+∞` to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Add for ExtendedReal {
    type Output = ExtendedReal;

    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => ExtendedReal::Finite(a + b),
            _ => ExtendedReal::PosInf,
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => a.partial_cmp(b),
            (ExtendedReal::PosInf, ExtendedReal::PosInf) => Some(Ordering::Equal),
            (ExtendedReal::PosInf, _) => Some(Ordering::Greater),
            (_, ExtendedReal::PosInf) => Some(Ordering::Less),
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::PosInf => f.write_str("inf"),
        }
    }
}

/// Closed interval `[lo, hi]`, used for subdifferentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `max{2z/ν, 0}`, the loss that turns the general problem into ν-SVM.
    HingeVariant { nu: f64 },
    /// `(max{1 + z, 0})²`
    TruncatedQuadratic,
    /// `e^z`
    Exponential,
    /// `u(z/w)` with `u` the four-branch estimation-error loss of width `h`.
    EstimationError { h: f64, w: f64 },
}

/// A validated loss function.
///
/// Construct through [`Loss::new`] or the named constructors; parameters are
/// checked once and the value is immutable afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Loss {
    kind: LossKind,
}

impl Loss {
    pub fn new(kind: LossKind) -> Result<Self> {
        match kind {
            LossKind::HingeVariant { nu } => {
                if !(nu > 0.0 && nu <= 1.0) {
                    return Err(Error::param(format!("hinge requires nu in (0, 1], got {nu}")));
                }
            }
            LossKind::EstimationError { h, w } => {
                if !(h >= 0.0 && h.is_finite()) {
                    return Err(Error::param(format!("esterr requires h >= 0, got {h}")));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::param(format!("esterr requires w > 0, got {w}")));
                }
            }
            LossKind::TruncatedQuadratic | LossKind::Exponential => {}
        }
        Ok(Loss { kind })
    }

    pub fn hinge(nu: f64) -> Result<Self> {
        Loss::new(LossKind::HingeVariant { nu })
    }

    pub fn truncated_quadratic() -> Self {
        Loss {
            kind: LossKind::TruncatedQuadratic,
        }
    }

    pub fn exponential() -> Self {
        Loss {
            kind: LossKind::Exponential,
        }
    }

    pub fn estimation_error(h: f64, w: f64) -> Result<Self> {
        Loss::new(LossKind::EstimationError { h, w })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Smallest `α` with `ℓ*(α) < ∞`.
    pub fn domain_inf_threshold(&self) -> f64 {
        0.0
    }

    /// Upper end of the conjugate domain (`+∞` unless the loss is Lipschitz).
    pub fn domain_sup(&self) -> f64 {
        match self.kind {
            LossKind::HingeVariant { nu } => 2.0 / nu,
            _ => f64::INFINITY,
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self.kind, LossKind::HingeVariant { .. })
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::HingeVariant { nu } => (2.0 * z / nu).max(0.0),
            LossKind::TruncatedQuadratic => {
                let t = (1.0 + z).max(0.0);
                t * t
            }
            LossKind::Exponential => z.exp(),
            LossKind::EstimationError { h, w } => esterr_u(z / w, h),
        }
    }

    pub fn conjugate(&self, alpha: f64) -> ExtendedReal {
        if alpha < 0.0 || alpha.is_nan() {
            return ExtendedReal::PosInf;
        }
        let v = match self.kind {
            LossKind::HingeVariant { nu } => {
                if alpha <= 2.0 / nu {
                    0.0
                } else {
                    return ExtendedReal::PosInf;
                }
            }
            LossKind::TruncatedQuadratic => -alpha + alpha * alpha / 4.0,
            LossKind::Exponential => {
                if alpha == 0.0 {
                    0.0
                } else {
                    alpha * alpha.ln() - alpha
                }
            }
            LossKind::EstimationError { h, w } => {
                let a = (alpha * w - 1.0).abs() + h;
                a * a - (1.0 + h) * (1.0 + h)
            }
        };
        if v.is_finite() {
            ExtendedReal::Finite(v)
        } else {
            ExtendedReal::PosInf
        }
    }

    pub fn subgradient(&self, z: f64) -> Interval {
        match self.kind {
            LossKind::HingeVariant { nu } => {
                let slope = 2.0 / nu;
                if z < 0.0 {
                    Interval::point(0.0)
                } else if z > 0.0 {
                    Interval::point(slope)
                } else {
                    Interval { lo: 0.0, hi: slope }
                }
            }
            LossKind::TruncatedQuadratic => Interval::point(2.0 * (1.0 + z).max(0.0)),
            LossKind::Exponential => Interval::point(z.exp()),
            LossKind::EstimationError { h, w } => Interval::point(esterr_du(z / w, h) / w),
        }
    }

    /// Derivative where it exists; the upper end of the subdifferential otherwise.
    pub fn derivative(&self, z: f64) -> f64 {
        self.subgradient(z).hi
    }

    /// Lipschitz constant of the loss on `[-radius, radius]`.
    pub fn lipschitz_bound(&self, radius: f64) -> Result<f64> {
        if !(radius > 0.0) {
            return Err(Error::param(format!("radius must be positive, got {radius}")));
        }
        Ok(self.subgradient(radius).hi)
    }
}

/// The estimation-error loss
///
/// ```text
/// u(z) = 0                          z <= -2h-2
///        (z/2 + 1 + h)^2            -2h-2 <= z <= -2h
///        z + 2h + 1                 -2h <= z <= 2h
///        z^2/4 + z(1-h) + (1+h)^2   2h <= z
/// ```
fn esterr_u(z: f64, h: f64) -> f64 {
    if z <= -2.0 * h - 2.0 {
        0.0
    } else if z <= -2.0 * h {
        let t = z / 2.0 + 1.0 + h;
        t * t
    } else if z <= 2.0 * h {
        z + 2.0 * h + 1.0
    } else {
        z * z / 4.0 + z * (1.0 - h) + (1.0 + h) * (1.0 + h)
    }
}

// u is C¹: the one-sided derivatives agree at every branch join.
fn esterr_du(z: f64, h: f64) -> f64 {
    if z <= -2.0 * h - 2.0 {
        0.0
    } else if z <= -2.0 * h {
        z / 2.0 + 1.0 + h
    } else if z <= 2.0 * h {
        1.0
    } else {
        z / 2.0 + 1.0 - h
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::HingeVariant { nu } => write!(f, "hinge:nu={nu}"),
            LossKind::TruncatedQuadratic => f.write_str("tq"),
            LossKind::Exponential => f.write_str("exp"),
            LossKind::EstimationError { h, w } => write!(f, "esterr:h={h},w={w}"),
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    /// Parses `hinge:nu=0.5`, `tq`, `exp` and `esterr:h=1,w=1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p.trim()),
            None => (s, ""),
        };
        let mut nu = None;
        let mut h = None;
        let mut w = None;
        for kv in params.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::param(format!("expected key=value in loss spec, got {kv:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("bad number in loss spec: {v:?}")))?;
            match k.trim() {
                "nu" => nu = Some(v),
                "h" => h = Some(v),
                "w" => w = Some(v),
                other => return Err(Error::param(format!("unknown loss parameter {other:?}"))),
            }
        }
        match name {
            "hinge" => Loss::hinge(nu.unwrap_or(0.5)),
            "tq" => Ok(Loss::truncated_quadratic()),
            "exp" => Ok(Loss::exponential()),
            "esterr" => Loss::estimation_error(h.unwrap_or(0.0), w.unwrap_or(1.0)),
            other => Err(Error::param(format!("unknown loss {other:?}"))),
        }
    }
}

impl TryFrom<String> for Loss {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Loss> for String {
    fn from(l: Loss) -> String {
        l.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_losses() -> Vec<Loss> {
        vec![
            Loss::hinge(0.5).unwrap(),
            Loss::truncated_quadratic(),
            Loss::exponential(),
            Loss::estimation_error(1.0, 1.0).unwrap(),
            Loss::estimation_error(0.0, 1.0).unwrap(),
            Loss::estimation_error(0.5, 2.0).unwrap(),
        ]
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Loss::truncated_quadratic().eval(0.0), 1.0);
        let e = Loss::estimation_error(1.0, 1.0).unwrap();
        assert_eq!(e.eval(-4.0), 0.0);
        assert_eq!(e.eval(0.0), 3.0);
        assert_eq!(Loss::exponential().eval(0.0), 1.0);
    }

    #[test]
    fn esterr_branches_are_continuous() {
        for &h in &[0.0, 0.3, 1.0, 2.5] {
            for &join in &[-2.0 * h - 2.0, -2.0 * h, 2.0 * h] {
                let left = esterr_u(join - 1e-9, h);
                let right = esterr_u(join + 1e-9, h);
                assert!((left - right).abs() < 1e-8, "h={h} join={join}");
                let dl = esterr_du(join - 1e-9, h);
                let dr = esterr_du(join + 1e-9, h);
                assert!((dl - dr).abs() < 1e-8, "derivative jump at h={h} join={join}");
            }
        }
        // the two explicit branch formulas agree at ±2h
        let h = 1.0;
        let mid = |z: f64| z + 2.0 * h + 1.0;
        let left = |z: f64| (z / 2.0 + 1.0 + h).powi(2);
        let right = |z: f64| z * z / 4.0 + z * (1.0 - h) + (1.0 + h).powi(2);
        assert_eq!(mid(-2.0 * h), left(-2.0 * h));
        assert_eq!(mid(2.0 * h), right(2.0 * h));
    }

    #[test]
    fn conjugate_examples() {
        let hinge = Loss::hinge(0.5).unwrap();
        assert_eq!(hinge.conjugate(3.0), ExtendedReal::Finite(0.0));
        assert_eq!(hinge.conjugate(4.0), ExtendedReal::Finite(0.0));
        assert_eq!(hinge.conjugate(4.0 + 1e-12), ExtendedReal::PosInf);
        assert_eq!(Loss::truncated_quadratic().conjugate(2.0), ExtendedReal::Finite(-1.0));
        assert_eq!(Loss::exponential().conjugate(-0.1), ExtendedReal::PosInf);
        assert_eq!(Loss::exponential().conjugate(0.0), ExtendedReal::Finite(0.0));
        let e = Loss::estimation_error(1.0, 1.0).unwrap();
        assert_eq!(e.conjugate(1.0), ExtendedReal::Finite(-3.0));
    }

    #[test]
    fn conjugate_is_infinite_for_negative_and_zero_at_origin() {
        for l in all_losses() {
            assert_eq!(l.conjugate(-1e-9), ExtendedReal::PosInf, "{l}");
            assert_eq!(l.conjugate(0.0), ExtendedReal::Finite(0.0), "{l}");
            assert_eq!(l.domain_inf_threshold(), 0.0);
        }
    }

    #[test]
    fn subgradient_examples() {
        let tq = Loss::truncated_quadratic();
        assert_eq!(tq.subgradient(0.5), Interval::point(3.0));
        let fd = (tq.eval(0.5 + 1e-6) - tq.eval(0.5 - 1e-6)) / 2e-6;
        assert!((fd - 3.0).abs() < 1e-6);
        assert_eq!(Loss::hinge(0.5).unwrap().subgradient(0.0), Interval { lo: 0.0, hi: 4.0 });
        assert_eq!(Loss::exponential().subgradient(1.0), Interval::point(std::f64::consts::E));
    }

    #[test]
    fn only_hinge_is_nonsmooth() {
        for l in all_losses() {
            for i in -400..=400 {
                let z = i as f64 * 0.025;
                let g = l.subgradient(z);
                if l.is_smooth() {
                    assert!(g.is_singleton(), "{l} at {z}");
                }
            }
        }
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(Loss::truncated_quadratic().lipschitz_bound(2.0).unwrap(), 6.0);
        assert_eq!(Loss::exponential().lipschitz_bound(1.0).unwrap(), std::f64::consts::E);
        assert_eq!(Loss::hinge(0.5).unwrap().lipschitz_bound(10.0).unwrap(), 4.0);
        assert!(Loss::exponential().lipschitz_bound(0.0).is_err());
    }

    #[test]
    fn lipschitz_bounds_grid_slopes() {
        for l in all_losses() {
            let r = 2.0;
            let k = l.lipschitz_bound(r).unwrap();
            let n = 2000;
            let zs: Vec<f64> = (0..=n).map(|i| -r + 2.0 * r * i as f64 / n as f64).collect();
            let max_slope = zs
                .windows(2)
                .map(|p| ((l.eval(p[1]) - l.eval(p[0])) / (p[1] - p[0])).abs())
                .fold(0.0, f64::max);
            assert!(max_slope <= k + 1e-9, "{l}: {max_slope} > {k}");
            assert!(max_slope >= k - 1e-2, "{l}: bound {k} not tight ({max_slope})");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Loss::hinge(0.0).is_err());
        assert!(Loss::hinge(1.5).is_err());
        assert!(Loss::estimation_error(-1.0, 1.0).is_err());
        assert!(Loss::estimation_error(1.0, 0.0).is_err());
    }

    #[test]
    fn fenchel_young() {
        for l in all_losses() {
            let alphas: Vec<f64> = (0..=80).map(|i| i as f64 * 0.05).collect();
            for i in -400..=400 {
                let z = i as f64 * 0.025;
                let g = l.subgradient(z);
                for &a in &alphas {
                    let Some(c) = l.conjugate(a).finite() else { continue };
                    let slack = l.eval(z) + c - a * z;
                    assert!(slack >= -1e-9, "{l}: z={z} a={a} slack={slack}");
                    if g.contains(a, 0.0) {
                        assert!(slack.abs() < 1e-9, "{l}: equality fails at z={z} a={a}");
                    }
                }
                // equality at the subgradient itself
                for a in [g.lo, g.hi] {
                    if let Some(c) = l.conjugate(a).finite() {
                        let slack = l.eval(z) + c - a * z;
                        let scale = 1.0 + l.eval(z).abs();
                        assert!(slack.abs() < 1e-9 * scale, "{l}: z={z} a={a} slack={slack}");
                    }
                }
            }
        }
    }

    #[test]
    fn esterr_h0_is_rescaled_truncated_quadratic() {
        let e = Loss::estimation_error(0.0, 1.0).unwrap();
        for i in -200..200 {
            let z = i as f64 * 0.05;
            let expect = (z / 2.0 + 1.0).max(0.0).powi(2);
            assert!((e.eval(z) - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["hinge:nu=0.5", "tq", "exp", "esterr:h=1,w=1"] {
            let l: Loss = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert!("logistic".parse::<Loss>().is_err());
        assert!("hinge:nu".parse::<Loss>().is_err());
        assert!("esterr:h=1,q=2".parse::<Loss>().is_err());
        let j = serde_json::to_string(&Loss::exponential()).unwrap();
        assert_eq!(j, "\"exp\"");
        let back: Loss = serde_json::from_str("\"esterr:h=1,w=2\"").unwrap();
        assert_eq!(back, Loss::estimation_error(1.0, 2.0).unwrap());
    }

    #[test]
    fn extended_real_arithmetic() {
        let a = ExtendedReal::Finite(1.0);
        assert_eq!(a + ExtendedReal::Finite(2.0), ExtendedReal::Finite(3.0));
        assert_eq!(a + ExtendedReal::PosInf, ExtendedReal::PosInf);
        assert!(ExtendedReal::PosInf > ExtendedReal::Finite(1e300));
        assert_eq!(ExtendedReal::PosInf.to_f64(), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn midpoint_convexity(a in -8.0f64..8.0, b in -8.0f64..8.0, which in 0usize..6) {
            let l = all_losses()[which];
            let mid = l.eval((a + b) / 2.0);
            let avg = (l.eval(a) + l.eval(b)) / 2.0;
            prop_assert!(mid <= avg + 1e-12 * (1.0 + avg.abs()));
            prop_assert!(l.eval(a) >= 0.0);
        }

        #[test]
        fn subgradient_monotone(a in -8.0f64..8.0, b in -8.0f64..8.0, which in 0usize..6) {
            let l = all_losses()[which];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(l.subgradient(lo).hi <= l.subgradient(hi).lo + 1e-12);
            prop_assert!(l.subgradient(lo).lo >= 0.0);
        }
    }
}
