//! Bias selection by exact empirical 0-1 loss minimization and the final
//! decision function.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::kernel::KernelExpansion;
use crate::samples::Samples;

/// `x ↦ sign(f(x) + b)`, with `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionModel {
    #[serde(flatten)]
    pub f: KernelExpansion,
    #[serde(rename = "bias")]
    pub b: f64,
    /// Feature transform applied before evaluating `f`, if the model was
    /// trained on standardized inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
}

impl DecisionModel {
    pub fn new(f: KernelExpansion, b: f64) -> Self {
        DecisionModel { f, b, standardizer: None }
    }

    pub fn with_standardizer(mut self, s: Standardizer) -> Self {
        self.standardizer = Some(s);
        self
    }

    /// `f(x) + b` for every row of `x`.
    pub fn decision_values(&self, x: &Samples) -> Result<Vec<f64>> {
        let values = match &self.standardizer {
            Some(s) => self.f.eval_many(&s.apply(x)?)?,
            None => self.f.eval_many(x)?,
        };
        Ok(values.into_iter().map(|v| v + self.b).collect())
    }

    pub fn predict(&self, x: &Samples) -> Result<Vec<i8>> {
        Ok(self
            .decision_values(x)?
            .into_iter()
            .map(|v| if v >= 0.0 { 1 } else { -1 })
            .collect())
    }

    /// Fraction of samples with `y (f(x) + b) ≤ 0`.
    pub fn error_rate(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let values = self.decision_values(data.x())?;
        Ok(zero_one_error(&values, data.y()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fraction of `values` on the wrong side of zero, boundary included.
pub fn zero_one_error(values: &[f64], y: &[i8]) -> f64 {
    let wrong = values.iter().zip(y).filter(|(v, &l)| l as f64 * **v <= 0.0).count();
    wrong as f64 / values.len().max(1) as f64
}

/// Bias minimizing the empirical 0-1 error of `f + b` on `data`.
pub fn estimate_bias(f: &KernelExpansion, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    bias_from_values(&f.eval_many(data.x())?, data.y())
}

/// Exact minimizer of `b ↦ #{i : y_i (v_i + b) ≤ 0}`.
///
/// The count is constant on the open intervals between consecutive distinct
/// thresholds `−v_i` and at least as large at the thresholds themselves.
/// Among optimal intervals the midpoint of the widest bounded one is
/// returned; if only an unbounded one is optimal, its finite end moved out
/// by one.
pub fn bias_from_values(values: &[f64], y: &[i8]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyData);
    }
    if values.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: y.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("decision values must be finite"));
    }
    let mut pts: Vec<(f64, i8)> = values.iter().zip(y).map(|(v, &l)| (-v, l)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));

    // below every threshold all positives are wrong; crossing a threshold
    // fixes its positives and breaks its negatives
    let mut errors = pts.iter().filter(|p| p.1 > 0).count();
    let mut cuts = Vec::new();
    let mut counts = vec![errors];
    let mut i = 0;
    while i < pts.len() {
        let t = pts[i].0;
        while i < pts.len() && pts[i].0 == t {
            if pts[i].1 > 0 {
                errors -= 1;
            } else {
                errors += 1;
            }
            i += 1;
        }
        cuts.push(t);
        counts.push(errors);
    }
    let best = *counts.iter().min().unwrap();
    let k = cuts.len();
    let mut choice: Option<(f64, f64)> = None;
    for j in 1..k {
        if counts[j] == best {
            let width = cuts[j] - cuts[j - 1];
            if choice.map_or(true, |(w, _)| width > w) {
                choice = Some((width, 0.5 * (cuts[j] + cuts[j - 1])));
            }
        }
    }
    if let Some((_, b)) = choice {
        return Ok(b);
    }
    if counts[0] == best {
        Ok(cuts[0] - 1.0)
    } else {
        Ok(cuts[k - 1] + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use rand::Rng;

    fn errors_at(values: &[f64], y: &[i8], b: f64) -> usize {
        values.iter().zip(y).filter(|(v, &l)| l as f64 * (**v + b) <= 0.0).count()
    }

    /// Evaluates every interval midpoint, every threshold and both outer rays.
    fn brute_min(values: &[f64], y: &[i8]) -> usize {
        let mut t: Vec<f64> = values.iter().map(|v| -v).collect();
        t.sort_by(f64::total_cmp);
        let mut cands = vec![t[0] - 1.0, t[t.len() - 1] + 1.0];
        for w in t.windows(2) {
            cands.push(0.5 * (w[0] + w[1]));
        }
        cands.extend(&t);
        cands.iter().map(|&b| errors_at(values, y, b)).min().unwrap()
    }

    #[test]
    fn three_point_example() {
        let b = bias_from_values(&[-1.0, 0.5, 2.0], &[-1, 1, 1]).unwrap();
        assert_eq!(b, 0.25);
    }

    #[test]
    fn unbounded_optimum() {
        assert_eq!(bias_from_values(&[0.0; 4], &[1; 4]).unwrap(), 1.0);
        assert_eq!(bias_from_values(&[0.0; 3], &[-1; 3]).unwrap(), -1.0);
    }

    #[test]
    fn random_instances_match_exhaustive_thresholds() {
        let mut rng = crate::data::rng_from_seed(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..50);
            // coarse values force ties between thresholds
            let v: Vec<f64> = (0..n).map(|_| (rng.gen_range(-20..20) as f64) / 4.0).collect();
            let y: Vec<i8> = (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
            let b = bias_from_values(&v, &y).unwrap();
            assert_eq!(errors_at(&v, &y, b), brute_min(&v, &y));
        }
    }

    #[test]
    fn shift_equivariance() {
        let v = [0.3, -1.2, 0.8, 2.0, -0.1, 0.9];
        let y = [1, -1, 1, -1, -1, 1];
        let b = bias_from_values(&v, &y).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + 3.5).collect();
        let bs = bias_from_values(&shifted, &y).unwrap();
        assert!((bs - (b - 3.5)).abs() < 1e-12);
    }

    #[test]
    fn error_rate_boundary_counts() {
        let x = Samples::from_rows(&[[1.0], [2.0], [-1.0]]).unwrap();
        let ds = Dataset::new(x.clone(), vec![1, 1, -1]).unwrap();
        let zero = DecisionModel::new(KernelExpansion::zero(Kernel::Linear, x.clone()), 0.0);
        assert_eq!(zero.error_rate(&ds).unwrap(), 1.0);
        let good = DecisionModel::new(KernelExpansion::new(Kernel::Linear, x.clone(), vec![1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(good.error_rate(&ds).unwrap(), 0.0);
        let flipped = DecisionModel::new(good.f.scaled(-1.0), 0.0);
        assert_eq!(flipped.error_rate(&ds).unwrap(), 1.0);
        assert_eq!(zero.predict(&x).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn json_round_trip() {
        let x = Samples::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        let m = DecisionModel::new(KernelExpansion::new(Kernel::Gaussian { gamma: 0.5 }, x, vec![0.25, -1.5]).unwrap(), 0.125);
        let text = serde_json::to_string(&m).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["kernel", "anchors", "coefficients", "bias"] {
            assert!(v.get(key).is_some(), "{key} missing in {text}");
        }
        assert_eq!(serde_json::from_str::<DecisionModel>(&text).unwrap(), m);
    }
}
