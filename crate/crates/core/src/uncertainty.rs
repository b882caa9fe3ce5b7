//! Uncertainty sets over one class's samples, their vertex and level-set
//! representations, and the revision that turns either into an additive
//! conjugate the solver can consume.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{self, Format, LoadOptions};
use crate::error::{Error, Result};
use crate::kernel::check_psd;
use crate::loss::{ExtendedReal, Loss, LossKind};
use crate::samples::Samples;

const SIMPLEX_TOL: f64 = 1e-9;

/// Set-defining function of the weights `α_o`.
#[derive(Debug, Clone, PartialEq)]
pub enum VertexRep {
    /// `αᵀ C α`
    Quadratic(DMatrix<f64>),
    /// `(1/m) Σ ℓ*(m α_i)`
    Additive(Loss),
}

impl VertexRep {
    pub fn quadratic(matrix: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&matrix)?;
        check_psd(&matrix)?;
        Ok(VertexRep::Quadratic(matrix))
    }

    fn value(&self, alpha: &[f64], m: usize) -> ExtendedReal {
        match self {
            VertexRep::Quadratic(c) => {
                let a = DVector::from_column_slice(alpha);
                ExtendedReal::Finite(a.dot(&(c * &a)))
            }
            VertexRep::Additive(loss) => additive_level(loss, alpha, m),
        }
    }
}

/// `h*(z) = (√((z − μ)ᵀ C (z − μ)) + r)²`, with `C` usually an inverse
/// covariance. The parameters must not be estimated from the samples the set
/// is later applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetRep {
    mean: DVector<f64>,
    matrix: DMatrix<f64>,
    radius: f64,
}

impl LevelSetRep {
    pub fn new(mean: Vec<f64>, matrix: DMatrix<f64>, radius: f64) -> Result<Self> {
        if matrix.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: matrix.nrows(),
            });
        }
        check_symmetric(&matrix)?;
        check_psd(&matrix)?;
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::param(format!("radius must be >= 0, got {radius}")));
        }
        Ok(LevelSetRep {
            mean: DVector::from_vec(mean),
            matrix,
            radius,
        })
    }

    /// Builds the rep from a mean and a covariance, inverting the latter.
    pub fn from_covariance(mean: Vec<f64>, covariance: DMatrix<f64>, radius: f64) -> Result<Self> {
        let inv = covariance
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("covariance is not invertible".into()))?;
        let inv = (&inv + inv.transpose()) * 0.5;
        LevelSetRep::new(mean, inv, radius)
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Mahalanobis-type norm `√(vᵀ C v)`.
    fn norm(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.matrix * v)).max(0.0).sqrt()
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: z.len(),
            });
        }
        let d = DVector::from_column_slice(z) - &self.mean;
        let t = self.norm(&d) + self.radius;
        Ok(t * t)
    }

    fn shifted(&self, by: &DVector<f64>) -> LevelSetRep {
        LevelSetRep {
            mean: &self.mean - by,
            matrix: self.matrix.clone(),
            radius: self.radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Vertex(VertexRep),
    /// Level-set rep together with the class's points, needed to map
    /// weights to the point `Σ α_i x_i`.
    LevelSet(LevelSetRep, Samples),
    Additive(Loss),
}

/// `𝒰_o[c]` for one class: the rep, the total sample count `m` and the
/// class's sample indices `M_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySpec {
    pub rep: Representation,
    pub m: usize,
    pub indices: Vec<usize>,
}

impl UncertaintySpec {
    pub fn new(rep: Representation, m: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices.len() > m {
            return Err(Error::param(format!(
                "class needs between 1 and m = {m} samples, got {}",
                indices.len()
            )));
        }
        match &rep {
            Representation::Vertex(VertexRep::Quadratic(c)) if c.nrows() != indices.len() => {
                return Err(Error::DimensionMismatch {
                    expected: indices.len(),
                    got: c.nrows(),
                })
            }
            Representation::LevelSet(ls, pts) if pts.len() != indices.len() || pts.dim() != ls.mean.len() => {
                return Err(Error::DimensionMismatch {
                    expected: indices.len(),
                    got: pts.len(),
                })
            }
            _ => {}
        }
        Ok(UncertaintySpec { rep, m, indices })
    }

    pub fn additive(loss: Loss, m: usize, indices: Vec<usize>) -> Result<Self> {
        UncertaintySpec::new(Representation::Additive(loss), m, indices)
    }

    /// Only additive specs can be handed to the solver.
    pub fn solver_loss(&self) -> Result<Loss> {
        match &self.rep {
            Representation::Additive(l) | Representation::Vertex(VertexRep::Additive(l)) => Ok(*l),
            _ => Err(Error::param("revise the uncertainty set before solving")),
        }
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let scale = 1.0 + m.amax();
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(Error::param("matrix must be symmetric"));
    }
    Ok(())
}

fn additive_level(loss: &Loss, alpha: &[f64], m: usize) -> ExtendedReal {
    let mf = m as f64;
    alpha
        .iter()
        .fold(ExtendedReal::Finite(0.0), |acc, &a| acc + loss.conjugate(mf * a))
        .finite()
        .map(|s| ExtendedReal::Finite(s / mf))
        .unwrap_or(ExtendedReal::PosInf)
}

/// True iff `α_o` lies on the simplex and the representation's level is at most `c`.
pub fn membership(spec: &UncertaintySpec, alpha: &[f64], c: f64) -> Result<bool> {
    if alpha.len() != spec.indices.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.indices.len(),
            got: alpha.len(),
        });
    }
    let sum: f64 = alpha.iter().sum();
    if alpha.iter().any(|&a| a < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Ok(false);
    }
    let level = match &spec.rep {
        Representation::Vertex(v) => v.value(alpha, spec.m),
        Representation::Additive(loss) => additive_level(loss, alpha, spec.m),
        Representation::LevelSet(ls, pts) => {
            let mut z = vec![0.0; pts.dim()];
            for (a, row) in alpha.iter().zip(pts.rows()) {
                for (zj, xj) in z.iter_mut().zip(row) {
                    *zj += a * xj;
                }
            }
            ExtendedReal::Finite(ls.eval(&z)?)
        }
    };
    Ok(level <= ExtendedReal::Finite(c + SIMPLEX_TOL))
}

/// One class's contribution `(|α s − 1| d + r)² − (d + r)²` to a revised
/// level-set conjugate; `s = m_o/m`, `d = √(μᵀCμ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTerm {
    pub share: f64,
    pub distance: f64,
    pub radius: f64,
}

impl LevelTerm {
    fn eval(&self, alpha: f64) -> f64 {
        let a = (alpha * self.share - 1.0).abs() * self.distance + self.radius;
        let b = self.distance + self.radius;
        a * a - b * b
    }
}

/// A revised 1-D conjugate `ℓ̄*`; infinite for negative arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum RevisedConjugate {
    /// `ℓ*` of an existing loss.
    Conjugate { loss: Loss },
    /// `b₁ α + b₂ α²`
    Quadratic { linear: f64, quadratic: f64 },
    /// Sum of [`LevelTerm`]s.
    LevelSet { terms: Vec<LevelTerm> },
}

/// A shipped loss whose dual problem, with `λ` multiplied by
/// `lambda_factor`, has the same optimal weights as the revised conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentLoss {
    pub loss: Loss,
    pub lambda_factor: f64,
}

impl RevisedConjugate {
    pub fn eval(&self, alpha: f64) -> ExtendedReal {
        if alpha < 0.0 || alpha.is_nan() {
            return ExtendedReal::PosInf;
        }
        match self {
            RevisedConjugate::Conjugate { loss } => loss.conjugate(alpha),
            RevisedConjugate::Quadratic { linear, quadratic } => {
                ExtendedReal::Finite(linear * alpha + quadratic * alpha * alpha)
            }
            RevisedConjugate::LevelSet { terms } => ExtendedReal::Finite(terms.iter().map(|t| t.eval(alpha)).sum()),
        }
    }

    /// `(b₁, b₂)` when the conjugate is a quadratic polynomial on `α ≥ 0`.
    pub fn quadratic_coefficients(&self) -> Option<(f64, f64)> {
        match self {
            RevisedConjugate::Quadratic { linear, quadratic } => Some((*linear, *quadratic)),
            RevisedConjugate::LevelSet { terms } if terms.iter().all(|t| t.radius == 0.0) => {
                let b2 = terms.iter().map(|t| (t.share * t.distance).powi(2)).sum();
                let b1 = -2.0 * terms.iter().map(|t| t.share * t.distance * t.distance).sum::<f64>();
                Some((b1, b2))
            }
            RevisedConjugate::Conjugate { loss } if loss.kind() == LossKind::TruncatedQuadratic => Some((-1.0, 0.25)),
            _ => None,
        }
    }

    /// Rewrites the revised conjugate as a shipped loss plus a rescaling of
    /// `λ`. Terms linear in `α` are constant on the simplex and drop out.
    pub fn equivalent_loss(&self) -> Result<EquivalentLoss> {
        if let RevisedConjugate::Conjugate { loss } = self {
            return Ok(EquivalentLoss {
                loss: *loss,
                lambda_factor: 1.0,
            });
        }
        if let RevisedConjugate::LevelSet { terms } = self {
            let active: Vec<&LevelTerm> = terms.iter().filter(|t| t.distance > 0.0).collect();
            if let [t] = active.as_slice() {
                let d = t.distance;
                return Ok(EquivalentLoss {
                    loss: Loss::estimation_error(t.radius / d, t.share)?,
                    lambda_factor: 1.0 / (d * d),
                });
            }
        }
        match self.quadratic_coefficients() {
            Some((_, b2)) if b2 > 0.0 => Ok(EquivalentLoss {
                loss: Loss::truncated_quadratic(),
                lambda_factor: 1.0 / (4.0 * b2),
            }),
            Some(_) => Err(Error::OutsideRegime("quadratic coefficient must be positive".into())),
            None => Err(Error::OutsideRegime(
                "no closed-form loss when both class means are nonzero and the radius is positive".into(),
            )),
        }
    }
}

/// Additive projection of two vertex representations:
/// `ℓ̄*(α) = L_p*((α/m)1_p) + L_n*((α/m)1_n) − L_p*(0) − L_n*(0)`.
pub fn revise_vertex(rep_p: &VertexRep, rep_n: &VertexRep, m: usize) -> Result<RevisedConjugate> {
    if m == 0 {
        return Err(Error::EmptyData);
    }
    match (rep_p, rep_n) {
        (VertexRep::Quadratic(cp), VertexRep::Quadratic(cn)) => {
            check_psd(cp)?;
            check_psd(cn)?;
            let mf = m as f64;
            Ok(RevisedConjugate::Quadratic {
                linear: 0.0,
                quadratic: (cp.sum() + cn.sum()) / (mf * mf),
            })
        }
        (VertexRep::Additive(lp), VertexRep::Additive(ln)) if lp == ln => {
            Ok(RevisedConjugate::Conjugate { loss: *lp })
        }
        (VertexRep::Additive(_), VertexRep::Additive(_)) => {
            Err(Error::param("both classes must use the same additive loss"))
        }
        _ => Err(Error::param("both representations must be quadratic or both additive")),
    }
}

/// Additive projection of two level-set representations, using
/// `h_o*(α (m_o/m) μ_o)` for the class-weighted point.
pub fn revise_levelset(
    rep_p: &LevelSetRep,
    rep_n: &LevelSetRep,
    m_p: usize,
    m_n: usize,
    m: usize,
) -> Result<RevisedConjugate> {
    if rep_p.mean.len() != rep_n.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: rep_p.mean.len(),
            got: rep_n.mean.len(),
        });
    }
    if m == 0 || m_p + m_n > m {
        return Err(Error::param(format!("class counts {m_p} + {m_n} exceed m = {m}")));
    }
    if rep_p.mean.iter().all(|&v| v == 0.0) && rep_n.mean.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateMean);
    }
    let mf = m as f64;
    let term = |rep: &LevelSetRep, mo: usize| LevelTerm {
        share: mo as f64 / mf,
        distance: rep.norm(&rep.mean),
        radius: rep.radius,
    };
    Ok(RevisedConjugate::LevelSet {
        terms: vec![term(rep_p, m_p), term(rep_n, m_n)],
    })
}

/// Ellipsoid `{z : (z − center)ᵀ shape (z − center) ≤ radius_sq}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidView {
    pub center: Vec<f64>,
    pub shape: DMatrix<f64>,
    pub radius_sq: f64,
}

impl EllipsoidView {
    pub fn quadratic_form(&self, z: &[f64]) -> f64 {
        let d = DVector::from_iterator(z.len(), z.iter().zip(&self.center).map(|(a, b)| a - b));
        d.dot(&(&self.shape * &d))
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.quadratic_form(z) <= self.radius_sq
    }
}

/// Point-space view of the truncated-quadratic set `Σ α_i² ≤ 4(c+1)/m` for
/// one class: centered at the class mean, shaped by the inverse empirical
/// covariance. Exact when the class's points are affinely independent and
/// `m_o = d + 1`, since the weights are then unique and
/// `m_o Σ α_i² = 1 + (z − x̄)ᵀ Σ̂⁻¹ (z − x̄)`.
pub fn ellipsoid_view(spec: &UncertaintySpec, points: &Samples, c: f64) -> Result<EllipsoidView> {
    match spec.rep {
        Representation::Additive(l) | Representation::Vertex(VertexRep::Additive(l))
            if l.kind() == LossKind::TruncatedQuadratic => {}
        _ => return Err(Error::param("ellipsoid view needs the truncated-quadratic set")),
    }
    let mo = points.len();
    if mo != spec.indices.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.indices.len(),
            got: mo,
        });
    }
    if mo < 2 {
        return Err(Error::SingularMatrix("a single point has zero covariance".into()));
    }
    let d = points.dim();
    let n = mo as f64;
    let mut center = vec![0.0; d];
    for row in points.rows() {
        for (c, x) in center.iter_mut().zip(row) {
            *c += x / n;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in points.rows() {
        let v = DVector::from_iterator(d, row.iter().zip(&center).map(|(a, b)| a - b));
        cov += &v * v.transpose() / n;
    }
    let eig = cov.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    if eig.eigenvalues.min() <= 1e-12 * max.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularMatrix("empirical covariance is singular".into()));
    }
    let shape = cov
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("empirical covariance is singular".into()))?;
    Ok(EllipsoidView {
        center,
        shape,
        radius_sq: 4.0 * (c + 1.0) * n / spec.m as f64 - 1.0,
    })
}

/// Where level-set parameters come from: a calibration data file or inline values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Calibration {
    Path(PathBuf),
    Inline {
        mu_p: Vec<f64>,
        mu_n: Vec<f64>,
        sigma_p: Vec<Vec<f64>>,
        sigma_n: Vec<Vec<f64>>,
        #[serde(default)]
        radius: Option<f64>,
    },
}

/// JSON form `{"set": ..., "params": {...}, "calibration": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub set: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::param("covariance must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn class_moments(x: &Samples, idx: &[usize]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if idx.len() < 2 {
        return Err(Error::SingularMatrix("calibration class has fewer than two samples".into()));
    }
    let d = x.dim();
    let n = idx.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in idx {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for &i in idx {
        let v = DVector::from_iterator(d, x.row(i).iter().zip(&mean).map(|(a, b)| a - b));
        cov += &v * v.transpose() / (n - 1.0);
    }
    Ok((mean, cov))
}

impl UncertaintyConfig {
    fn param(&self, key: &str, default: f64) -> Result<f64> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| Error::param(format!("parameter {key} must be a number"))),
        }
    }

    /// The loss named by `set` and `params`, without any revision.
    pub fn base_loss(&self) -> Result<Loss> {
        match self.set.as_str() {
            "tq" => Ok(Loss::truncated_quadratic()),
            "exp" => Ok(Loss::exponential()),
            "hinge" => Loss::hinge(self.param("nu", 0.5)?),
            "esterr" => Loss::estimation_error(self.param("h", 0.0)?, self.param("w", 1.0)?),
            other => Err(Error::param(format!("unknown uncertainty set {other:?}"))),
        }
    }

    /// Level-set reps `(p, n)` from the calibration source, shifted so the
    /// negative mean is zero.
    pub fn level_sets(&self) -> Result<Option<(LevelSetRep, LevelSetRep)>> {
        let radius = self.param("r", 0.0)?;
        let (mu_p, mu_n, sp, sn, r) = match &self.calibration {
            None => return Ok(None),
            Some(Calibration::Inline {
                mu_p,
                mu_n,
                sigma_p,
                sigma_n,
                radius: r,
            }) => (
                mu_p.clone(),
                mu_n.clone(),
                matrix_from_rows(sigma_p)?,
                matrix_from_rows(sigma_n)?,
                r.unwrap_or(radius),
            ),
            Some(Calibration::Path(path)) => {
                let ds = data::load(path, Format::from_path(path), &LoadOptions::default())?;
                let (mp, sp) = class_moments(ds.x(), &ds.positives())?;
                let (mn, sn) = class_moments(ds.x(), &ds.negatives())?;
                (mp, mn, sp, sn, radius)
            }
        };
        let p = LevelSetRep::from_covariance(mu_p, sp, r)?;
        let n = LevelSetRep::from_covariance(mu_n, sn, r)?;
        let shift = n.mean.clone();
        Ok(Some((p.shifted(&shift), n.shifted(&shift))))
    }

    /// The loss and `λ` factor the solver should use for a training set with
    /// `m_p` positives and `m_n` negatives.
    pub fn resolve(&self, m_p: usize, m_n: usize) -> Result<EquivalentLoss> {
        match self.level_sets()? {
            None => Ok(EquivalentLoss {
                loss: self.base_loss()?,
                lambda_factor: 1.0,
            }),
            Some((p, n)) => revise_levelset(&p, &n, m_p, m_n, m_p + m_n)?.equivalent_loss(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{numeric_conjugate, GridSpec};
    use rand::Rng;

    fn spec(rep: Representation, m: usize, k: usize) -> UncertaintySpec {
        UncertaintySpec::new(rep, m, (0..k).collect()).unwrap()
    }

    #[test]
    fn membership_examples() {
        let hinge = spec(Representation::Additive(Loss::hinge(1.0).unwrap()), 4, 2);
        assert!(membership(&hinge, &[0.5, 0.5], 0.0).unwrap());
        assert!(!membership(&hinge, &[0.6, 0.6], 0.0).unwrap());
        assert!(!membership(&hinge, &[1.0, 0.0], 0.0).unwrap());
        let tq = spec(Representation::Additive(Loss::truncated_quadratic()), 4, 2);
        assert!(membership(&tq, &[1.0, 0.0], 0.0).unwrap());
        assert!(!membership(&tq, &[0.6, 0.6], 10.0).unwrap());
        assert!(membership(&tq, &[1.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn membership_is_monotone_in_level() {
        let tq = spec(Representation::Additive(Loss::truncated_quadratic()), 8, 4);
        let mut rng = crate::data::rng_from_seed(5);
        for _ in 0..200 {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let a: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let c = rng.gen_range(-1.0..1.0);
            if membership(&tq, &a, c).unwrap() {
                assert!(membership(&tq, &a, c + 0.1).unwrap());
            }
        }
    }

    #[test]
    fn level_set_membership_uses_point() {
        let pts = Samples::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let ls = LevelSetRep::new(vec![1.0, 0.0], DMatrix::identity(2, 2), 0.0).unwrap();
        let s = spec(Representation::LevelSet(ls, pts), 4, 2);
        assert!(membership(&s, &[0.5, 0.5], 0.0).unwrap());
        assert!(!membership(&s, &[1.0, 0.0], 0.5).unwrap());
        assert!(membership(&s, &[1.0, 0.0], 1.0).unwrap());
    }

    #[test]
    fn revise_vertex_quadratic_identity() {
        let cp = VertexRep::quadratic(DMatrix::identity(3, 3)).unwrap();
        let cn = VertexRep::quadratic(DMatrix::identity(2, 2)).unwrap();
        let r = revise_vertex(&cp, &cn, 5).unwrap();
        assert_eq!(r.quadratic_coefficients(), Some((0.0, 0.2)));
        // (1/m) Σ ℓ̄*(m α_i) = Σ α_i² on the product of simplices
        let alpha = [0.2, 0.3, 0.5, 0.6, 0.4];
        let lhs: f64 = alpha.iter().map(|&a| r.eval(5.0 * a).to_f64()).sum::<f64>() / 5.0;
        let rhs: f64 = alpha.iter().map(|a| a * a).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        assert_eq!(r.eval(-1.0), ExtendedReal::PosInf);
    }

    #[test]
    fn revise_vertex_rejects_non_psd_and_mixed() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(VertexRep::quadratic(bad), Err(Error::NotPsd { .. })));
        let q = VertexRep::quadratic(DMatrix::identity(2, 2)).unwrap();
        let a = VertexRep::Additive(Loss::exponential());
        assert!(revise_vertex(&q, &a, 4).is_err());
    }

    #[test]
    fn revise_vertex_additive_is_identity() {
        for loss in [
            Loss::truncated_quadratic(),
            Loss::exponential(),
            Loss::hinge(0.5).unwrap(),
            Loss::estimation_error(1.0, 2.0).unwrap(),
        ] {
            let a = VertexRep::Additive(loss);
            let r = revise_vertex(&a, &a, 7).unwrap();
            for i in 0..200 {
                let alpha = -1.0 + 0.05 * i as f64;
                assert_eq!(r.eval(alpha), loss.conjugate(alpha));
            }
        }
    }

    fn unit_rep(mean: Vec<f64>, r: f64) -> LevelSetRep {
        let d = mean.len();
        LevelSetRep::new(mean, DMatrix::identity(d, d), r).unwrap()
    }

    #[test]
    fn revise_levelset_quadratic_coefficients() {
        let p = unit_rep(vec![1.0, 0.0], 0.0);
        let n = unit_rep(vec![0.0, 0.0], 0.0);
        let r = revise_levelset(&p, &n, 5, 5, 10).unwrap();
        let (b1, b2) = r.quadratic_coefficients().unwrap();
        assert!((b1 + 1.0).abs() < 1e-15 && (b2 - 0.25).abs() < 1e-15);
        for i in 0..50 {
            let a = 0.1 * i as f64;
            assert!((r.eval(a).to_f64() - (a * a / 4.0 - a)).abs() < 1e-12);
        }
        let z = unit_rep(vec![0.0, 0.0], 0.0);
        assert!(matches!(revise_levelset(&z, &n, 5, 5, 10), Err(Error::DegenerateMean)));
    }

    #[test]
    fn revise_levelset_zero_at_origin_and_convex() {
        let p = unit_rep(vec![1.0], 1.0);
        let n = unit_rep(vec![0.0], 1.0);
        let r = revise_levelset(&p, &n, 3, 7, 10).unwrap();
        assert_eq!(r.eval(0.0), ExtendedReal::Finite(0.0));
        for i in 0..300 {
            let a = 0.037 * i as f64;
            let b = a + 0.81;
            let mid = r.eval((a + b) / 2.0).to_f64();
            assert!(mid <= (r.eval(a).to_f64() + r.eval(b).to_f64()) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn levelset_with_zero_negative_mean_is_scaled_esterr() {
        let p = LevelSetRep::new(vec![2.0, 0.0], DMatrix::identity(2, 2) * 0.5, 0.7).unwrap();
        let n = unit_rep(vec![0.0, 0.0], 0.7);
        let r = revise_levelset(&p, &n, 4, 6, 10).unwrap();
        let eq = r.equivalent_loss().unwrap();
        let d2 = 2.0;
        assert!((eq.lambda_factor - 1.0 / d2).abs() < 1e-15);
        assert_eq!(
            eq.loss.kind(),
            LossKind::EstimationError {
                h: 0.7 / d2.sqrt(),
                w: 0.4
            }
        );
        for i in 0..100 {
            let a = 0.1 * i as f64;
            let lhs = r.eval(a).to_f64();
            let rhs = d2 * eq.loss.conjugate(a).to_f64();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn revised_primal_is_linear_on_middle_branch() {
        let (h, w) = (1.0, 1.0);
        let p = unit_rep(vec![1.0], h);
        let n = unit_rep(vec![0.0], h);
        let r = revise_levelset(&p, &n, 10, 0, 10).unwrap();
        let grid = GridSpec::new(0.0, 40.0, 8001).unwrap();
        let primal = |z: f64| numeric_conjugate(|a| r.eval(a).to_f64(), &grid, z);
        let step = 0.25;
        let mut z = -2.0 * h * w + step;
        while z + step < 2.0 * h * w {
            let second = primal(z + step).unwrap() + primal(z - step).unwrap() - 2.0 * primal(z).unwrap();
            assert!(second.abs() < 1e-6, "second difference {second} at {z}");
            z += step;
        }
    }

    #[test]
    fn equivalent_loss_for_quadratic_forms() {
        let r = RevisedConjugate::Quadratic {
            linear: 0.0,
            quadratic: 0.2,
        };
        let eq = r.equivalent_loss().unwrap();
        assert_eq!(eq.loss, Loss::truncated_quadratic());
        assert!((eq.lambda_factor - 1.25).abs() < 1e-15);
        let both = RevisedConjugate::LevelSet {
            terms: vec![
                LevelTerm {
                    share: 0.5,
                    distance: 1.0,
                    radius: 1.0,
                },
                LevelTerm {
                    share: 0.5,
                    distance: 1.0,
                    radius: 1.0,
                },
            ],
        };
        assert!(matches!(both.equivalent_loss(), Err(Error::OutsideRegime(_))));
    }

    fn triangle() -> Samples {
        Samples::from_rows(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).unwrap()
    }

    #[test]
    fn ellipsoid_view_triangle() {
        let s = spec(Representation::Additive(Loss::truncated_quadratic()), 6, 3);
        let e = ellipsoid_view(&s, &triangle(), 0.0).unwrap();
        assert!((e.center[0] - 2.0 / 3.0).abs() < 1e-15 && (e.center[1] - 2.0 / 3.0).abs() < 1e-15);
        let expect = DMatrix::from_row_slice(2, 2, &[1.5, 0.75, 0.75, 1.5]);
        assert!((&e.shape - expect).amax() < 1e-12);
        assert!((e.radius_sq - (4.0 * 3.0 / 6.0 - 1.0)).abs() < 1e-15);
        // c = −1 leaves no admissible weights at all
        let e = ellipsoid_view(&s, &triangle(), -1.0).unwrap();
        assert!(!e.contains(&e.center.clone()));
    }

    #[test]
    fn ellipsoid_view_errors() {
        let s = spec(Representation::Additive(Loss::truncated_quadratic()), 6, 1);
        let one = Samples::from_rows(&[[1.0, 1.0]]).unwrap();
        assert!(matches!(ellipsoid_view(&s, &one, 0.0), Err(Error::SingularMatrix(_))));
        let s = spec(Representation::Additive(Loss::truncated_quadratic()), 6, 3);
        let line = Samples::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert!(matches!(ellipsoid_view(&s, &line, 0.0), Err(Error::SingularMatrix(_))));
        let s = spec(Representation::Additive(Loss::exponential()), 6, 3);
        assert!(ellipsoid_view(&s, &triangle(), 0.0).is_err());
    }

    #[test]
    fn squared_weight_identity() {
        let s = spec(Representation::Additive(Loss::truncated_quadratic()), 6, 3);
        let pts = triangle();
        let e = ellipsoid_view(&s, &pts, 0.0).unwrap();
        let mut rng = crate::data::rng_from_seed(1);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..3).map(|_| -rng.gen::<f64>().ln()).collect();
            let t: f64 = raw.iter().sum();
            let a: Vec<f64> = raw.iter().map(|v| v / t).collect();
            let z = [2.0 * a[1], 2.0 * a[2]];
            let sq: f64 = a.iter().map(|v| v * v).sum();
            assert!((3.0 * sq - 1.0 - e.quadratic_form(&z)).abs() < 1e-12);
        }
    }

    #[test]
    fn config_parsing_and_resolution() {
        let c: UncertaintyConfig = serde_json::from_str(r#"{"set": "hinge", "params": {"nu": 0.25}}"#).unwrap();
        assert_eq!(c.resolve(3, 3).unwrap().loss, Loss::hinge(0.25).unwrap());
        let c: UncertaintyConfig = serde_json::from_str(
            r#"{"set": "esterr", "params": {"r": 1.0},
                "calibration": {"mu_p": [1, 1], "mu_n": [1, 0],
                                "sigma_p": [[1, 0], [0, 1]], "sigma_n": [[2, 0], [0, 2]]}}"#,
        )
        .unwrap();
        let eq = c.resolve(2, 6).unwrap();
        // shifted positive mean (0, 1), identity covariance: d = 1
        assert_eq!(eq.loss, Loss::estimation_error(1.0, 0.25).unwrap());
        assert_eq!(eq.lambda_factor, 1.0);
        let bad: UncertaintyConfig = serde_json::from_str(r#"{"set": "logistic"}"#).unwrap();
        assert!(bad.resolve(1, 1).is_err());
    }
}
