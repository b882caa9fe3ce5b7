use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use uset_core::data::{self, Format, LabelColumn, LabelMapping, LoadOptions};
use uset_core::diagnostics::{psi_grid, rho_floor};
use uset_core::experiment::{
    emit_results, run_cv, run_synth_baseline, run_synth_experiment, run_train, summarize, ExperimentConfig,
    KernelFamily, SplitMode,
};
use uset_core::model::DecisionModel;
use uset_core::oracle::{numeric_conjugate, GridSpec};
use uset_core::samples::Samples;
use uset_core::{Dataset, Error, Loss, LossKind, Result};

#[derive(Parser)]
#[command(name = "uset", version, about = "Kernel classifiers from loss-induced uncertainty sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model (cross-validating λ and γ when the grid has several cells).
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Where to write the model JSON.
        #[arg(long)]
        model: PathBuf,
        /// Directory for the result record files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one predicted label per input row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Feature file; CSV rows without a label column unless --labeled.
        #[arg(long)]
        data: PathBuf,
        /// The file carries labels in the usual place; they are ignored.
        #[arg(long)]
        labeled: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the 0-1 error of a saved model on labeled data.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Cross-validate the (λ, γ) grid and print the table.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Write the table as CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Repeated train/test runs on the two-Gaussian synthetic problem.
    Synth {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Probability of the positive label.
        #[arg(long, default_value_t = 0.5)]
        p_pos: f64,
        /// Estimation-error loss parameter(s).
        #[arg(long, value_delimiter = ',', default_value = "0")]
        h: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Also run the ellipsoid baseline on the same repetitions.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Numerical diagnostics of a loss.
    Diagnose {
        #[command(subcommand)]
        what: Diagnose,
    },
    /// Brute-force checks of closed forms.
    Oracle {
        #[command(subcommand)]
        what: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Compare a closed-form conjugate with the grid transform.
    Conjugate {
        /// Loss spec, e.g. `tq`, `exp`, `hinge:nu=0.5`, `esterr:h=1,w=1`.
        #[arg(long)]
        loss: Loss,
        /// `lo:hi:n` or a comma list.
        #[arg(long, default_value = "0:4:41")]
        alpha: String,
    },
}

#[derive(Subcommand)]
enum Diagnose {
    /// ψ(θ, ρ) over a grid, as CSV.
    Psi {
        #[arg(long)]
        loss: Loss,
        /// θ values, `lo:hi:n` or a comma list.
        #[arg(long, default_value = "0:0.95:20")]
        theta: String,
        /// ρ values; defaults to 20 points from −ℓ(0)/2 to 10.
        #[arg(long)]
        rho: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Data file (`.csv` or libsvm); falls back to the config's source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<Format>,
    /// Label column: `last`, a 0-based index, or a header name.
    #[arg(long, default_value = "last")]
    label_column: String,
    #[arg(long, value_enum, default_value_t = Mapping::PlusMinusOne)]
    mapping: Mapping,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mapping {
    PlusMinusOne,
    ZeroOne,
    OneTwo,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Linear,
    Gaussian,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    loss: Option<Loss>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// λ grid (comma list).
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Gaussian widths in units of one over the median squared distance (comma list).
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    /// Fraction used for f, the rest for b, or `none` to use everything for both.
    #[arg(long)]
    split: Option<SplitMode>,
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(l) = self.loss {
            cfg.loss = l;
        }
        if let Some(k) = self.kernel {
            cfg.kernel = match k {
                KernelArg::Linear => KernelFamily::Linear,
                KernelArg::Gaussian => KernelFamily::Gaussian,
            };
        }
        if let Some(v) = &self.lambda {
            cfg.lambdas = v.clone();
        }
        if let Some(v) = &self.gamma {
            cfg.gammas = v.clone();
        }
        if let Some(k) = self.folds {
            cfg.folds = k;
        }
        if let Some(s) = self.split {
            cfg.split = s;
        }
        if self.standardize {
            cfg.standardize = true;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl DataArgs {
    fn load(&self, cfg: Option<&ExperimentConfig>) -> Result<Dataset> {
        let mapping = match self.mapping {
            Mapping::PlusMinusOne => LabelMapping::PlusMinusOne,
            Mapping::ZeroOne => LabelMapping::ZeroOne,
            Mapping::OneTwo => LabelMapping::OneTwo,
        };
        let label_column = match self.label_column.as_str() {
            "last" => LabelColumn::Last,
            s => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        };
        match (&self.data, cfg.and_then(|c| c.source.as_ref())) {
            (Some(path), _) => {
                let format = self.format.unwrap_or_else(|| Format::from_path(path));
                let opts = LoadOptions {
                    label_column,
                    header: None,
                    mapping,
                };
                data::load(path, format, &opts)
            }
            (None, Some(src)) => src.load(),
            (None, None) => Err(Error::param("no data: pass --data or set \"source\" in the config")),
        }
    }
}

/// `lo:hi:n` as `n` evenly spaced values, or a comma-separated list.
fn parse_values(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::param(format!("cannot read values from {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        return match n {
            0 => Err(bad()),
            1 => Ok(vec![lo]),
            _ => Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
        };
    }
    s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

fn read_features(path: &Path) -> Result<Samples> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|v| v.parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            // a non-numeric first row is a header
            Err(_) if line == 1 => continue,
            Err(e) => return Err(Error::Parse { line, message: e.to_string() }),
        }
    }
    let dim = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::param("rows have different lengths"));
    }
    Samples::new(dim, rows.concat())
}

fn writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_err(e: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<output>"),
        source: e,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { data, exp, model, out } => {
            let cfg = exp.resolve()?;
            let ds = data.load(Some(&cfg))?;
            let (m, rec) = run_train(&cfg, &ds, cfg.seeds[0])?;
            m.save(&model)?;
            println!(
                "lambda {} gamma {} train error {:.4} gap {:.2e}",
                rec.lambda.unwrap_or(f64::NAN),
                rec.gamma.unwrap_or(f64::NAN),
                rec.train_error,
                rec.gap.unwrap_or(f64::NAN)
            );
            if let Some(dir) = out {
                emit_results(&dir, &[rec])?;
            }
        }
        Command::Predict {
            model,
            data,
            labeled,
            output,
        } => {
            let m = DecisionModel::load(&model)?;
            let x = if labeled {
                data::load(&data, Format::from_path(&data), &LoadOptions::default())?.x().clone()
            } else {
                read_features(&data)?
            };
            let mut w = writer(output.as_ref())?;
            for label in m.predict(&x)? {
                writeln!(w, "{label}").map_err(write_err)?;
            }
        }
        Command::Eval { model, data } => {
            let m = DecisionModel::load(&model)?;
            let ds = data.load(None)?;
            println!("{}", m.error_rate(&ds)?);
        }
        Command::Cv { data, exp, output } => {
            let cfg = exp.resolve()?;
            let ds = data.load(Some(&cfg))?;
            let cv = run_cv(&cfg, &ds, cfg.seeds[0])?;
            let mut w = writer(output.as_ref())?;
            writeln!(w, "lambda,gamma,mean_error").map_err(write_err)?;
            for c in &cv.table {
                writeln!(w, "{},{},{}", c.lambda, c.gamma, c.mean_error).map_err(write_err)?;
            }
            eprintln!("best lambda {} gamma {}", cv.best.lambda, cv.best.gamma);
        }
        Command::Synth {
            exp,
            p_pos,
            h,
            reps,
            baseline,
            out,
        } => {
            let cfg = exp.resolve()?;
            if reps < 10 {
                log::warn!("{reps} repetitions give a noisy mean");
            }
            let seed = cfg.seeds[0];
            let mut records = Vec::new();
            for &hv in &h {
                records.extend(run_synth_experiment(&cfg, p_pos, hv, reps, seed)?);
            }
            if baseline {
                records.extend(run_synth_baseline(p_pos, reps, seed)?);
            }
            emit_results(&out, &records)?;
            for s in summarize(&records) {
                println!(
                    "{} p_pos={} : {:.2} ± {:.2} % over {} reps",
                    s.method,
                    p_pos,
                    100.0 * s.mean_test_error,
                    100.0 * s.sd_test_error,
                    s.n
                );
            }
        }
        Command::Diagnose {
            what: Diagnose::Psi { loss, theta, rho, output },
        } => {
            let thetas = parse_values(&theta)?;
            let rhos = match rho {
                Some(r) => parse_values(&r)?,
                None => parse_values(&format!("{}:10:20", rho_floor(&loss)))?,
            };
            let mut w = writer(output.as_ref())?;
            writeln!(w, "theta,rho,psi").map_err(write_err)?;
            for p in psi_grid(&loss, &thetas, &rhos)? {
                writeln!(w, "{},{},{}", p.theta, p.rho, p.value).map_err(write_err)?;
            }
        }
        Command::Oracle {
            what: Oracle::Conjugate { loss, alpha },
        } => {
            let grid = match loss.kind() {
                LossKind::Exponential => GridSpec::exponential_default(),
                _ => GridSpec::polynomial_default(),
            };
            println!("alpha,closed_form,numeric,abs_diff");
            for a in parse_values(&alpha)? {
                let closed = loss.conjugate(a).to_f64();
                let numeric = numeric_conjugate(|z| loss.eval(z), &grid, a)?;
                println!("{a},{closed},{numeric},{}", (closed - numeric).abs());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
