//! Exact minimization of `φ(s) = −s + (1/m) Σ ℓ(s − c_i)` over the scalar
//! offset `s`, one class at a time.

use crate::loss::{Loss, LossKind};

/// A loss as seen by the primal: either exact, or the hinge with its kink
/// replaced by a Moreau envelope of width `mu`.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Surrogate {
    Exact(Loss),
    SmoothHinge { slope: f64, mu: f64 },
}

impl Surrogate {
    pub(crate) fn value(&self, z: f64) -> f64 {
        match *self {
            Surrogate::Exact(l) => l.eval(z),
            Surrogate::SmoothHinge { slope, mu } => {
                if z <= 0.0 {
                    0.0
                } else if z <= slope * mu {
                    z * z / (2.0 * mu)
                } else {
                    slope * z - slope * slope * mu / 2.0
                }
            }
        }
    }

    pub(crate) fn slope(&self, z: f64) -> f64 {
        match *self {
            Surrogate::Exact(l) => l.derivative(z),
            Surrogate::SmoothHinge { slope, mu } => (z / mu).clamp(0.0, slope),
        }
    }
}

/// Returns `(s, φ(s))` at a minimizer.
pub(crate) fn minimize_offset(loss: &Surrogate, c: &[f64], m: f64) -> (f64, f64) {
    debug_assert!(!c.is_empty());
    let phi = |s: f64| -s + c.iter().map(|&ci| loss.value(s - ci)).sum::<f64>() / m;
    match loss {
        Surrogate::Exact(l) => match l.kind() {
            LossKind::Exponential => {
                // −1 + (1/m) Σ e^{s − c_i} = 0
                let top = c.iter().map(|&ci| -ci).fold(f64::NEG_INFINITY, f64::max);
                let lse = top + c.iter().map(|&ci| (-ci - top).exp()).sum::<f64>().ln();
                let s = m.ln() - lse;
                (s, phi(s))
            }
            LossKind::HingeVariant { nu } => {
                // piecewise linear: the minimum sits at the k-th smallest c
                // where the right slope −1 + (2/ν)k/m first turns non-negative
                let mut sorted = c.to_vec();
                sorted.sort_by(f64::total_cmp);
                let a = 2.0 / nu;
                let k = sorted
                    .iter()
                    .enumerate()
                    .position(|(i, _)| a * (i + 1) as f64 >= m * (1.0 - 1e-12))
                    .unwrap_or(sorted.len() - 1);
                let s = sorted[k];
                (s, phi(s))
            }
            _ => bisect(loss, c, m, &phi),
        },
        Surrogate::SmoothHinge { .. } => bisect(loss, c, m, &phi),
    }
}

fn bisect(loss: &Surrogate, c: &[f64], m: f64, phi: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let dphi = |s: f64| -1.0 + c.iter().map(|&ci| loss.slope(s - ci)).sum::<f64>() / m;
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = cmin - 1.0;
    let mut step = 1.0;
    while dphi(lo) > 0.0 {
        step *= 2.0;
        lo = cmin - step;
    }
    let mut hi = cmax + 1.0;
    step = 1.0;
    while dphi(hi) < 0.0 {
        step *= 2.0;
        hi = cmax + step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dphi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (phi(lo), phi(hi));
    if flo <= fhi {
        (lo, flo)
    } else {
        (hi, fhi)
    }
}
