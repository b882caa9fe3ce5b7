//! Training pipeline, cross-validation over `(λ, γ)`, the synthetic
//! benchmark with its ellipsoid baseline, and result files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::data::{self, Dataset, Format, LabelMapping, LoadOptions, Standardizer, SynthSpec};
use crate::error::{Error, Result};
use crate::kernel::{gram, median_sq_distance, Kernel, KernelExpansion};
use crate::loss::Loss;
use crate::model::{bias_from_values, DecisionModel};
use crate::samples::Samples;
use crate::solver::{recover_normal, solve_dual_with, DualProblem, SolveOptions};
use crate::uncertainty::{EquivalentLoss, UncertaintyConfig};

/// Training points in the synthetic benchmark.
pub const SYNTH_TRAIN: usize = 400;
/// Test points per synthetic repetition.
pub const SYNTH_TEST: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    #[default]
    Gaussian,
}

/// Whether `f` and `b` are fitted on disjoint parts of the training data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SplitMode {
    /// Both on all training data.
    #[default]
    None,
    /// `f` on this fraction, `b` on the rest.
    Holdout(f64),
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(SplitMode::None);
        }
        let f: f64 = s
            .parse()
            .map_err(|_| Error::param(format!("split must be a fraction or \"none\", got {s:?}")))?;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::param(format!("split fraction must lie in (0, 1), got {f}")));
        }
        Ok(SplitMode::Holdout(f))
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::None => write!(f, "none"),
            SplitMode::Holdout(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for SplitMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SplitMode::None => s.serialize_str("none"),
            SplitMode::Holdout(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for SplitMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => SplitMode::from_str(&x.to_string()),
            Raw::Str(s) => SplitMode::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<Format>,
        #[serde(default)]
        mapping: LabelMapping,
    },
    Synth {
        synth: SynthSpec,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::File { path, format, mapping } => {
                let format = format.unwrap_or_else(|| Format::from_path(path));
                let opts = LoadOptions {
                    mapping: *mapping,
                    ..LoadOptions::default()
                };
                data::load(path, format, &opts)
            }
            DataSource::Synth { synth } => data::generate_synth(synth),
        }
    }
}

fn default_loss() -> Loss {
    Loss::truncated_quadratic()
}

/// `2^k` for `k = −6..6`.
pub fn default_lambdas() -> Vec<f64> {
    (-6..=6).map(|k| 2f64.powi(k)).collect()
}

/// `2^k` for `k = −3..3`, in units of one over the median squared distance.
pub fn default_gammas() -> Vec<f64> {
    (-3..=3).map(|k| 2f64.powi(k)).collect()
}

fn default_folds() -> usize {
    5
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_reps() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_loss")]
    pub loss: Loss,
    /// Replaces `loss` by the loss of a revised uncertainty set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyConfig>,
    #[serde(default)]
    pub kernel: KernelFamily,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Gaussian widths relative to one over the median squared distance of
    /// the training inputs.
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split: SplitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DataSource>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub standardize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::param(format!("{name} grid is empty")));
            }
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::param(format!("{name} grid holds {x}, which is not a positive number")));
            }
            Ok(())
        };
        positive("lambda", &self.lambdas)?;
        positive("gamma", &self.gammas)?;
        if self.folds < 2 {
            return Err(Error::param(format!("need at least two folds, got {}", self.folds)));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seed list is empty"));
        }
        if self.repetitions == 0 {
            return Err(Error::param("repetitions must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    /// Number of `(λ, γ)` cells; the Gaussian width grid is ignored by the
    /// linear kernel.
    pub fn grid_size(&self) -> usize {
        match self.kernel {
            KernelFamily::Linear => self.lambdas.len(),
            KernelFamily::Gaussian => self.lambdas.len() * self.gammas.len(),
        }
    }
}

/// One row of the result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub method: String,
    pub seed: u64,
    pub rep: usize,
    pub fold: Option<usize>,
    pub p_pos: Option<f64>,
    pub h: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub train_error: f64,
    pub test_error: Option<f64>,
    pub gap: Option<f64>,
    pub wall_time: f64,
}

const RECORD_HEADER: [&str; 13] = [
    "config_hash",
    "method",
    "seed",
    "rep",
    "fold",
    "p_pos",
    "h",
    "lambda",
    "gamma",
    "train_error",
    "test_error",
    "gap",
    "wall_time",
];

/// The selected hyperparameters, with `gamma` in absolute units (zero for
/// the linear kernel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lambda: f64,
    pub gamma: f64,
}

impl Hyper {
    pub fn kernel(&self) -> Kernel {
        if self.gamma > 0.0 {
            Kernel::Gaussian { gamma: self.gamma }
        } else {
            Kernel::Linear
        }
    }
}

/// Absolute kernel widths for `x`.
pub fn gamma_values(config: &ExperimentConfig, x: &Samples) -> Vec<f64> {
    match config.kernel {
        KernelFamily::Linear => vec![0.0],
        KernelFamily::Gaussian => {
            let med = median_sq_distance(x);
            let med = if med > 0.0 { med } else { 1.0 };
            config.gammas.iter().map(|g| g / med).collect()
        }
    }
}

fn submatrix(g: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| g[(rows[i], cols[j])])
}

/// A fitted model and what the solver reported.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: DecisionModel,
    pub gap: f64,
    pub converged: bool,
    alpha: Vec<f64>,
}

fn effective_loss(config: &ExperimentConfig, train: &Dataset) -> Result<EquivalentLoss> {
    match &config.uncertainty {
        Some(u) => {
            let pos = train.count_positive();
            u.resolve(pos, train.len() - pos)
        }
        None => Ok(EquivalentLoss {
            loss: config.loss,
            lambda_factor: 1.0,
        }),
    }
}

/// Solve for `f` on the first part, choose `b` on the second. `g` is the
/// kernel matrix of all of `data`.
fn fit_with_gram(
    config: &ExperimentConfig,
    data: &Dataset,
    g: &DMatrix<f64>,
    hyper: Hyper,
    seed: u64,
    warm: Option<&Vec<f64>>,
) -> Result<Fit> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (t1, t2) = match config.split {
        SplitMode::None => (all.clone(), all),
        SplitMode::Holdout(f) => data::split(data, f, seed)?,
    };
    let train = data.subset(&t1);
    let eq = effective_loss(config, &train)?;
    let g1 = Arc::new(submatrix(g, &t1, &t1));
    let problem = DualProblem::with_gram(eq.loss, hyper.kernel(), train, hyper.lambda * eq.lambda_factor, g1)?;
    let opts = SolveOptions {
        tol: config.tol,
        warm_start: warm.filter(|w| w.len() == t1.len()).cloned(),
        ..SolveOptions::default()
    };
    let sol = solve_dual_with(&problem, &opts)?;
    let f = recover_normal(&problem, &sol, problem.lambda());
    let cross = submatrix(g, &t2, &t1);
    let values = &cross * DVector::from_column_slice(&f.coefficients);
    let y2: Vec<i8> = t2.iter().map(|&i| data.y()[i]).collect();
    let b = bias_from_values(values.as_slice(), &y2)?;
    Ok(Fit {
        model: DecisionModel::new(f, b),
        gap: sol.gap,
        converged: sol.converged,
        alpha: sol.alpha,
    })
}

/// Fits one model at fixed hyperparameters.
pub fn fit(config: &ExperimentConfig, data: &Dataset, hyper: Hyper, seed: u64) -> Result<Fit> {
    let g = gram(&hyper.kernel(), data.x(), data.x())?;
    fit_with_gram(config, data, &g, hyper, seed, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub lambda: f64,
    pub gamma: f64,
    pub mean_error: f64,
    pub fold_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: Hyper,
    pub table: Vec<CvCell>,
    /// `(train, validation)` index lists shared by every cell.
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
}

/// k-fold cross-validation of the validation 0-1 error over the `(λ, γ)`
/// grid. Ties go to the smaller `λ`, then the smaller `γ`.
pub fn run_cv(config: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<CvOutcome> {
    config.validate()?;
    let folds = data::kfold(data, config.folds, seed)?;
    let gammas = gamma_values(config, data.x());
    let mut lambdas = config.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();

    let jobs: Vec<(usize, usize)> = (0..gammas.len()).flat_map(|gi| (0..folds.len()).map(move |fi| (gi, fi))).collect();
    let grams: Vec<DMatrix<f64>> = gammas
        .par_iter()
        .map(|&gm| gram(&Hyper { lambda: 1.0, gamma: gm }.kernel(), data.x(), data.x()))
        .collect::<Result<_>>()?;

    // errors[gi][fi][li]
    let results: Vec<((usize, usize), Vec<f64>)> = jobs
        .par_iter()
        .map(|&(gi, fi)| {
            let (tr, va) = &folds[fi];
            let train = data.subset(tr);
            let g_tr = submatrix(&grams[gi], tr, tr);
            let g_va = submatrix(&grams[gi], va, tr);
            let y_va: Vec<i8> = va.iter().map(|&i| data.y()[i]).collect();
            let mut warm: Option<Vec<f64>> = None;
            let mut errs = Vec::with_capacity(lambdas.len());
            for &lambda in &lambdas {
                let hyper = Hyper { lambda, gamma: gammas[gi] };
                let fit = fit_with_gram(config, &train, &g_tr, hyper, seed, warm.as_ref())?;
                // anchors are the training part used for f, which may be a
                // subset of the fold under a holdout split
                let values = match config.split {
                    SplitMode::None => &g_va * DVector::from_column_slice(&fit.model.f.coefficients),
                    SplitMode::Holdout(_) => DVector::from_vec(fit.model.f.eval_many(&data.x().select(va))?),
                };
                let v: Vec<f64> = values.iter().map(|x| x + fit.model.b).collect();
                errs.push(crate::model::zero_one_error(&v, &y_va));
                warm = Some(fit.alpha);
            }
            Ok(((gi, fi), errs))
        })
        .collect::<Result<_>>()?;

    let mut table = Vec::new();
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (li, &lambda) in lambdas.iter().enumerate() {
            let mut fold_errors = vec![0.0; folds.len()];
            for ((g, f), errs) in &results {
                if *g == gi {
                    fold_errors[*f] = errs[li];
                }
            }
            let mean_error = fold_errors.iter().sum::<f64>() / folds.len() as f64;
            table.push(CvCell {
                lambda,
                gamma,
                mean_error,
                fold_errors,
            });
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| {
            let tie = (a.mean_error - b.mean_error).abs() <= 1e-12;
            let by_err = if tie { std::cmp::Ordering::Equal } else { a.mean_error.total_cmp(&b.mean_error) };
            by_err.then(a.lambda.total_cmp(&b.lambda)).then(a.gamma.total_cmp(&b.gamma))
        })
        .expect("grid is non-empty");
    Ok(CvOutcome {
        best: Hyper {
            lambda: best.lambda,
            gamma: best.gamma,
        },
        table,
        folds,
    })
}

/// Chooses `(λ, γ)` by cross-validation unless the grid has a single cell,
/// then fits on all of `data`.
pub fn run_train(config: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<(DecisionModel, ResultRecord)> {
    config.validate()?;
    let start = Instant::now();
    let (work, standardizer) = if config.standardize {
        let s = Standardizer::fit(data.x());
        let x = s.apply(data.x())?;
        (Dataset::new(x, data.y().to_vec())?, Some(s))
    } else {
        (data.clone(), None)
    };
    let hyper = if config.grid_size() == 1 {
        Hyper {
            lambda: config.lambdas[0],
            gamma: gamma_values(config, work.x())[0],
        }
    } else {
        run_cv(config, &work, seed)?.best
    };
    let fitted = fit(config, &work, hyper, seed)?;
    if !fitted.converged {
        log::warn!("solver did not reach tolerance {} (gap {:e})", config.tol, fitted.gap);
    }
    let mut model = fitted.model;
    if let Some(s) = standardizer {
        model = model.with_standardizer(s);
    }
    let record = ResultRecord {
        config_hash: config.hash(),
        method: "uset".into(),
        seed,
        rep: 0,
        fold: None,
        p_pos: None,
        h: None,
        lambda: Some(hyper.lambda),
        gamma: Some(hyper.gamma),
        train_error: model.error_rate(data)?,
        test_error: None,
        gap: Some(fitted.gap),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}

/// Linear classifier from the two class ellipsoids `{x : (x − μ)ᵀ Σ⁻¹ (x − μ) ≤ κ²}`
/// grown at a common `κ` until they touch; the boundary passes through the
/// touching point. A stand-in for the minimax probability machine.
pub fn ellipsoid_baseline(data: &Dataset) -> Result<DecisionModel> {
    let d = data.dim();
    let moments = |idx: &[usize]| -> Result<(DVector<f64>, DMatrix<f64>)> {
        if idx.len() < 2 {
            return Err(Error::SingularMatrix("a class has fewer than two samples".into()));
        }
        let n = idx.len() as f64;
        let mut mean = DVector::zeros(d);
        for &i in idx {
            mean += DVector::from_column_slice(data.x().row(i)) / n;
        }
        let mut cov = DMatrix::zeros(d, d);
        for &i in idx {
            let v = DVector::from_column_slice(data.x().row(i)) - &mean;
            cov += &v * v.transpose() / (n - 1.0);
        }
        Ok((mean, cov))
    };
    let (mp, sp) = moments(&data.positives())?;
    let (mn, sn) = moments(&data.negatives())?;
    let delta = &mp - &mn;
    let dd = delta.norm_squared();
    if !(dd > 0.0) {
        return Err(Error::DegenerateMean);
    }
    // w = w0 + F u over the affine set wᵀΔ = 1
    let w0 = &delta / dd;
    let proj = DMatrix::identity(d, d) - &delta * delta.transpose() / dd;
    let eig = proj.symmetric_eigen();
    let keep: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    let basis = DMatrix::from_fn(d, keep.len(), |i, c| eig.eigenvectors[(i, keep[c])]);
    let spread = |s: &DMatrix<f64>, w: &DVector<f64>| w.dot(&(s * w)).max(0.0).sqrt();
    let mut w = w0.clone();
    if !keep.is_empty() {
        // iteratively reweighted least squares on ‖Σ_p^{1/2} w‖ + ‖Σ_n^{1/2} w‖
        let (mut bp, mut bn) = (1.0, 1.0);
        for _ in 0..500 {
            let a = &sp / bp + &sn / bn;
            let lhs = basis.transpose() * &a * &basis;
            let rhs = -(basis.transpose() * &a * &w0);
            let u = lhs
                .clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .or_else(|| lhs.pseudo_inverse(1e-14).ok().map(|p| p * &rhs))
                .ok_or_else(|| Error::SingularMatrix("baseline normal equations".into()))?;
            let next = &w0 + &basis * u;
            let change = (&next - &w).norm();
            w = next;
            bp = spread(&sp, &w).max(1e-12);
            bn = spread(&sn, &w).max(1e-12);
            if change <= 1e-12 * w.norm() {
                break;
            }
        }
    }
    let (ap, an) = (spread(&sp, &w), spread(&sn, &w));
    if !(ap + an > 0.0) {
        return Err(Error::SingularMatrix("both class covariances vanish along the normal".into()));
    }
    let kappa = 1.0 / (ap + an);
    let threshold = w.dot(&mp) - kappa * ap;
    let anchors = Samples::new(d, DMatrix::<f64>::identity(d, d).as_slice().to_vec())?;
    let f = KernelExpansion::new(Kernel::Linear, anchors, w.as_slice().to_vec())?;
    Ok(DecisionModel::new(f, -threshold))
}

/// Mean and sample standard deviation of the test errors of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub p_pos: Option<f64>,
    pub h: Option<f64>,
    pub n: usize,
    pub mean_test_error: f64,
    pub sd_test_error: f64,
}

/// Groups records by `(method, p_pos, h)` in first-seen order.
pub fn summarize(records: &[ResultRecord]) -> Vec<Summary> {
    let mut groups: Vec<(String, Option<f64>, Option<f64>, Vec<f64>)> = Vec::new();
    for r in records {
        let Some(e) = r.test_error else { continue };
        match groups.iter_mut().find(|g| g.0 == r.method && g.1 == r.p_pos && g.2 == r.h) {
            Some(g) => g.3.push(e),
            None => groups.push((r.method.clone(), r.p_pos, r.h, vec![e])),
        }
    }
    groups
        .into_iter()
        .map(|(method, p_pos, h, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            Summary {
                method,
                p_pos,
                h,
                n,
                mean_test_error: mean,
                sd_test_error: var.sqrt(),
            }
        })
        .collect()
}

fn synth_seeds(seed: u64, rep: usize) -> (u64, u64) {
    let base = seed.wrapping_mul(1_000_003).wrapping_add(2 * rep as u64);
    (base, base.wrapping_add(1) ^ 0x5EED_0000_0000)
}

/// Training and test sets of one synthetic repetition.
pub fn synth_pair(p_pos: f64, seed: u64, rep: usize) -> Result<(Dataset, Dataset)> {
    let (s_train, s_test) = synth_seeds(seed, rep);
    let train = data::generate_synth(&SynthSpec {
        p_pos,
        m: SYNTH_TRAIN,
        seed: s_train,
        ..SynthSpec::default()
    })?;
    let test = data::generate_synth(&SynthSpec {
        p_pos,
        m: SYNTH_TEST,
        seed: s_test,
        ..SynthSpec::default()
    })?;
    Ok((train, test))
}

/// Runs `reps` repetitions of the synthetic benchmark with the
/// estimation-error loss at the given `h`: fresh data, cross-validation on
/// the training set, test error on a fresh test set.
pub fn run_synth_experiment(config: &ExperimentConfig, p_pos: f64, h: f64, reps: usize, seed: u64) -> Result<Vec<ResultRecord>> {
    let mut cfg = config.clone();
    cfg.loss = Loss::estimation_error(h, 1.0)?;
    cfg.uncertainty = None;
    cfg.validate()?;
    let hash = cfg.hash();
    let mut records: Vec<ResultRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let start = Instant::now();
            let (train, test) = synth_pair(p_pos, seed, rep)?;
            let cv_seed = synth_seeds(seed, rep).0;
            let hyper = run_cv(&cfg, &train, cv_seed)?.best;
            let fitted = fit(&cfg, &train, hyper, cv_seed)?;
            Ok(ResultRecord {
                config_hash: hash.clone(),
                method: format!("esterr-h{h}"),
                seed,
                rep,
                fold: None,
                p_pos: Some(p_pos),
                h: Some(h),
                lambda: Some(hyper.lambda),
                gamma: Some(hyper.gamma),
                train_error: fitted.model.error_rate(&train)?,
                test_error: Some(fitted.model.error_rate(&test)?),
                gap: Some(fitted.gap),
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    records.sort_by_key(|r| r.rep);
    Ok(records)
}

/// The ellipsoid baseline on the same repetitions as [`run_synth_experiment`].
pub fn run_synth_baseline(p_pos: f64, reps: usize, seed: u64) -> Result<Vec<ResultRecord>> {
    let mut records: Vec<ResultRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let start = Instant::now();
            let (train, test) = synth_pair(p_pos, seed, rep)?;
            let model = ellipsoid_baseline(&train)?;
            Ok(ResultRecord {
                config_hash: String::new(),
                method: "ellipsoid-baseline".into(),
                seed,
                rep,
                fold: None,
                p_pos: Some(p_pos),
                h: None,
                lambda: None,
                gamma: None,
                train_error: model.error_rate(&train)?,
                test_error: Some(model.error_rate(&test)?),
                gap: None,
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    records.sort_by_key(|r| r.rep);
    Ok(records)
}

fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.p_pos.unwrap_or(-1.0).total_cmp(&b.p_pos.unwrap_or(-1.0)))
            .then(a.h.unwrap_or(-1.0).total_cmp(&b.h.unwrap_or(-1.0)))
            .then(a.seed.cmp(&b.seed))
            .then(a.rep.cmp(&b.rep))
            .then(a.fold.cmp(&b.fold))
    });
}

/// Writes `results.csv`, `results.jsonl` and `summary.csv` into `dir`.
pub fn emit_results(dir: &Path, records: &[ResultRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);

    let csv_path = dir.join("results.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&csv_path)
        .map_err(|e| csv_error(&csv_path, e))?;
    w.write_record(RECORD_HEADER).map_err(|e| csv_error(&csv_path, e))?;
    for r in &sorted {
        w.serialize(r).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let jsonl_path = dir.join("results.jsonl");
    let mut text = String::new();
    for r in &sorted {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    std::fs::write(&jsonl_path, text).map_err(|e| Error::io(&jsonl_path, e))?;

    let summary_path = dir.join("summary.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&summary_path)
        .map_err(|e| csv_error(&summary_path, e))?;
    w.write_record(["method", "p_pos", "h", "n", "mean_test_error", "sd_test_error"])
        .map_err(|e| csv_error(&summary_path, e))?;
    for s in summarize(&sorted) {
        w.serialize(&s).map_err(|e| csv_error(&summary_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&summary_path, e))?;
    Ok(())
}

/// Parses a `results.csv` written by [`emit_results`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRecord>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}
