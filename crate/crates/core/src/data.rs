//! Labelled data sets, file ingestion, the Gaussian synthetic generator and
//! stratified splitting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::Samples;

/// Seeded generator used everywhere randomness is needed; ChaCha output is
/// identical across platforms.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pair of independent standard normals by the Box–Muller transform.
pub fn box_muller<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // 1 - U lies in (0, 1], keeping the log finite.
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let t = std::f64::consts::TAU * u2;
    (r * t.cos(), r * t.sin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Samples,
    y: Vec<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Samples, y: Vec<i8>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::param(format!("labels must be +1 or -1, got {bad}")));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::param("features must be finite"));
        }
        Ok(Dataset {
            x,
            y,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.x.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.x.dim(),
                got: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn x(&self) -> &Samples {
        &self.x
    }

    pub fn y(&self) -> &[i8] {
        &self.y
    }

    pub fn label(&self, i: usize) -> f64 {
        self.y[i] as f64
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// `M_p`: indices with label +1.
    pub fn positives(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.y[i] == 1).collect()
    }

    /// `M_n`: indices with label −1.
    pub fn negatives(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.y[i] == -1).collect()
    }

    pub fn count_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn has_both_labels(&self) -> bool {
        let p = self.count_positive();
        p > 0 && p < self.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Writes `x1,...,xd,label` CSV with a header row. `f64` values use the
    /// shortest representation that parses back to the same bits.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let names: Vec<String> = match &self.feature_names {
            Some(n) => n.clone(),
            None => (1..=self.dim()).map(|i| format!("x{i}")).collect(),
        };
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "{},label", names.join(","))?;
            for (row, &y) in self.x.rows().zip(&self.y) {
                for v in row {
                    write!(w, "{v},")?;
                }
                writeln!(w, "{y}")?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }
}

/// Per-feature standardization fitted on one data set and applied to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Samples) -> Self {
        let (n, d) = (x.len().max(1) as f64, x.dim());
        let mut mean = vec![0.0; d];
        for r in x.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in x.rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Samples) -> Result<Samples> {
        if x.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.dim(),
            });
        }
        let data = x
            .rows()
            .flat_map(|r| r.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s))
            .collect();
        Samples::new(x.dim(), data)
    }
}

/// Parameters of the two-Gaussian synthetic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mu_p: [f64; 2],
    pub mu_n: [f64; 2],
    pub sigma_p: [[f64; 2]; 2],
    pub sigma_n: [[f64; 2]; 2],
    pub p_pos: f64,
    pub m: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        // Σ_n = Rᵀ diag(0.5², 1.5²) R with R the counterclockwise rotation by π/3.
        let (s, c) = (std::f64::consts::FRAC_PI_3).sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.25, 2.25]));
        let sn = r.transpose() * d * r;
        SynthSpec {
            mu_p: [0.0, 0.0],
            mu_n: [1.0, 1.0],
            sigma_p: [[1.0, 0.0], [0.0, 1.0]],
            sigma_n: [[sn[(0, 0)], sn[(0, 1)]], [sn[(1, 0)], sn[(1, 1)]]],
            p_pos: 0.5,
            m: 400,
            seed: 0,
        }
    }
}

fn psd_sqrt(s: &[[f64; 2]; 2]) -> Result<DMatrix<f64>> {
    let m = DMatrix::from_row_slice(2, 2, &[s[0][0], s[0][1], s[1][0], s[1][1]]);
    if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::param("covariance must be symmetric"));
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.eigenvalues.min(),
        });
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

pub fn generate_synth(spec: &SynthSpec) -> Result<Dataset> {
    if !(spec.p_pos > 0.0 && spec.p_pos < 1.0) {
        return Err(Error::param(format!("p_pos must lie in (0, 1), got {}", spec.p_pos)));
    }
    if spec.m == 0 {
        return Err(Error::EmptyData);
    }
    let lp = psd_sqrt(&spec.sigma_p)?;
    let ln = psd_sqrt(&spec.sigma_n)?;
    let mut rng = rng_from_seed(spec.seed);
    let mut data = Vec::with_capacity(2 * spec.m);
    let mut y = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let positive = rng.gen::<f64>() < spec.p_pos;
        let (z0, z1) = box_muller(&mut rng);
        let (l, mu) = if positive {
            (&lp, spec.mu_p)
        } else {
            (&ln, spec.mu_n)
        };
        data.push(mu[0] + l[(0, 0)] * z0 + l[(0, 1)] * z1);
        data.push(mu[1] + l[(1, 0)] * z0 + l[(1, 1)] * z1);
        y.push(if positive { 1 } else { -1 });
    }
    Dataset::new(Samples::new(2, data)?, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMapping {
    /// Only `+1` / `-1` (and `1`) are accepted.
    #[default]
    PlusMinusOne,
    /// `1 → +1`, `0 → −1`.
    ZeroOne,
    /// `1 → +1`, `2 → −1`.
    OneTwo,
}

impl LabelMapping {
    fn map(&self, raw: &str, line: usize) -> Result<i8> {
        let unknown = || Error::UnknownLabel {
            line,
            label: raw.to_string(),
        };
        let v: f64 = raw.trim().parse().map_err(|_| unknown())?;
        match (self, v) {
            (_, v) if v == 1.0 => Ok(1),
            (_, v) if v == -1.0 => Ok(-1),
            (LabelMapping::ZeroOne, v) if v == 0.0 => Ok(-1),
            (LabelMapping::OneTwo, v) if v == 2.0 => Ok(-1),
            _ => Err(unknown()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    Last,
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Libsvm,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "libsvm" | "svmlight" => Ok(Format::Libsvm),
            other => Err(Error::param(format!("unknown format {other:?}"))),
        }
    }
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Libsvm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub label_column: LabelColumn,
    /// `None` detects a header from a non-numeric first row.
    pub header: Option<bool>,
    pub mapping: LabelMapping,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            label_column: LabelColumn::Last,
            header: None,
            mapping: LabelMapping::PlusMinusOne,
        }
    }
}

pub fn load(path: &Path, format: Format, opts: &LoadOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => read_csv(file, opts),
        Format::Libsvm => read_libsvm(BufReader::new(file), opts.mapping),
    }
}

pub fn read_csv<R: std::io::Read>(reader: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(Error::EmptyData);
    }
    let header = match opts.header {
        Some(h) => h,
        None => records[0].1.iter().any(|f| f.parse::<f64>().is_err()),
    };
    let names: Option<Vec<String>> = header.then(|| records[0].1.iter().map(str::to_string).collect());
    let body = if header { &records[1..] } else { &records[..] };
    let width = match &names {
        Some(n) => n.len(),
        None => body.first().map(|(_, r)| r.len()).ok_or(Error::EmptyData)?,
    };
    if width < 2 {
        return Err(Error::Parse {
            line: records[0].0,
            message: "need at least one feature and a label column".into(),
        });
    }
    let label_idx = match &opts.label_column {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(Error::param(format!("label column {i} out of range"))),
        LabelColumn::Name(n) => names
            .as_ref()
            .and_then(|ns| ns.iter().position(|c| c == n))
            .ok_or_else(|| Error::param(format!("no column named {n:?}")))?,
    };
    let mut data = Vec::with_capacity(body.len() * (width - 1));
    let mut y = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != width {
            return Err(Error::Parse {
                line: *line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            if j == label_idx {
                y.push(opts.mapping.map(field, *line)?);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line: *line,
                    message: format!("not a number: {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!("non-finite feature {field:?}"),
                    });
                }
                data.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyData);
    }
    let ds = Dataset::new(Samples::new(width - 1, data)?, y)?;
    match names {
        Some(mut n) => {
            n.remove(label_idx);
            ds.with_feature_names(n)
        }
        None => Ok(ds),
    }
}

/// Reads `label idx:val ...` lines with 1-based feature indices.
pub fn read_libsvm<R: BufRead>(reader: R, mapping: LabelMapping) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut y = Vec::new();
    let mut dim = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = tokens.next().expect("non-empty line has a token");
        y.push(mapping.map(label, lineno)?);
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            if tok.starts_with("qid:") {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                line: lineno,
                message: format!("{msg}: {tok:?}"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(|| bad("expected idx:val"))?;
            let idx: usize = idx.parse().map_err(|_| bad("bad feature index"))?;
            let val: f64 = val.parse().map_err(|_| bad("bad feature value"))?;
            if idx == 0 {
                return Err(bad("feature indices are 1-based"));
            }
            if idx <= last {
                return Err(bad("feature indices must increase"));
            }
            if !val.is_finite() {
                return Err(bad("non-finite feature value"));
            }
            last = idx;
            dim = dim.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let dim = dim.max(1);
    let mut data = vec![0.0; rows.len() * dim];
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            data[r * dim + j] = v;
        }
    }
    Dataset::new(Samples::new(dim, data)?, y)
}

fn shuffled_classes(ds: &Dataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = rng_from_seed(seed);
    let mut pos = ds.positives();
    let mut neg = ds.negatives();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    (pos, neg)
}

/// Stratified split into `(T₁, T₂)` index lists with `T₁` holding about
/// `fraction` of each class. Both parts contain both labels.
pub fn split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Split(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    let (pos, neg) = shuffled_classes(ds, seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for class in [pos, neg] {
        let n = class.len();
        if n < 2 {
            return Err(Error::Split(format!(
                "a class with {n} sample(s) cannot appear in both parts"
            )));
        }
        let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        first.extend_from_slice(&class[..k]);
        second.extend_from_slice(&class[k..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Stratified k-fold: returns `(train, validation)` index lists per fold.
pub fn kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::Split(format!("k must be at least 2, got {k}")));
    }
    if k > ds.len() {
        return Err(Error::Split(format!("k = {k} exceeds the {} samples", ds.len())));
    }
    let (pos, neg) = shuffled_classes(ds, seed);
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::Split("each class needs at least two samples".into()));
    }
    let mut fold_of = vec![0usize; ds.len()];
    for (slot, &i) in pos.iter().chain(neg.iter()).enumerate() {
        fold_of[i] = slot % k;
    }
    let folds = (0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| fold_of[i] == f);
            (train, val)
        })
        .collect::<Vec<_>>();
    for (train, _) in &folds {
        let p = train.iter().filter(|&&i| ds.y[i] == 1).count();
        if p == 0 || p == train.len() {
            return Err(Error::Split("a training fold lacks one of the labels".into()));
        }
    }
    Ok(folds)
}
