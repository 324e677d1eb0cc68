//! Argument definitions and command dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use pual_core::evaluation::{greedy_refine, grid_search};
use pual_core::{
    fit_gllc_kernel_with_gram, fit_kernel_with_gram, fit_model, read_features_csv, read_gram_csv,
    split, synth_generate, Classifier, ConfusionCounts, EvalDataset, Fraction, GridSpec,
    Hyperparams, KernelChoice, KernelSpec, KnnParams, Label, ModelKind, ModelLearner, PUDataset,
    PufScenario, SplitMode, SplitSpec, StopCriteria, SynthSpec, TrainingProblem,
};

use crate::envelope::ModelEnvelope;
use crate::error::CliError;
use crate::table1::{reproduce, Table1Config};

#[derive(Debug, Parser)]
#[command(
    name = "pual",
    version,
    about = "Positive-unlabeled classification with asymmetric loss"
)]
pub struct Cli {
    /// TOML file of defaults, one table per command (`[train]`, `[tune]`, ...).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trifurcate dataset.
    Synth(SynthArgs),
    /// Split a labeled dataset into a PU training file and a test file.
    Split(SplitArgs),
    /// Train a model and save it.
    Train(TrainArgs),
    /// Score a CSV with a saved model.
    Predict(PredictArgs),
    /// Compare predictions with true labels.
    Eval(EvalArgs),
    /// Tune hyperparameters by cross-validated PUF score.
    Tune(TuneArgs),
    /// Run the PUAL vs GLLC synthetic comparison.
    #[command(name = "reproduce-table1")]
    ReproduceTable1(Table1Args),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long = "mean-p2")]
    pub mean_p2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// `single-training-set` or `case-control`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long = "gamma-prime")]
    pub gamma_prime: Option<String>,
    #[arg(long = "labeled-fraction")]
    pub labeled_fraction: Option<String>,
    #[arg(long = "test-fraction")]
    pub test_fraction: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long = "train-out")]
    pub train_out: PathBuf,
    #[arg(long = "test-out")]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// pual-linear, pual-kernel, gllc-linear or gllc-kernel.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub cu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub cp: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub knn: Option<usize>,
    /// rbf, linear-via-b, precomputed or none.
    #[arg(long)]
    pub kernel: Option<String>,
    /// RBF width; defaults to the --lambda value.
    #[arg(long, allow_hyphen_values = true)]
    pub width: Option<f64>,
    /// Square Gram CSV for --kernel precomputed.
    #[arg(long)]
    pub gram: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: Option<String>,
    /// synthetic, real or reduced.
    #[arg(long)]
    pub preset: Option<String>,
    /// single-training-set or case-control.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// rbf or linear-via-b, for kernel models.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Follow the grid with greedy ±10% refinement (default: on for the real preset).
    #[arg(long)]
    pub greedy: Option<bool>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "reduced-grid")]
    pub reduced_grid: bool,
    /// Fit on raw features instead of z-scored ones.
    #[arg(long = "no-standardize")]
    pub no_standardize: bool,
    /// Compare the RBF-kernel variants; the `λ` grid supplies the widths.
    #[arg(long)]
    pub rbf: bool,
    #[arg(long)]
    pub folds: Option<usize>,
}

/// Defaults read from `--config`.
#[derive(Debug, Default)]
pub struct Config {
    table: toml::Table,
    path: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::data(format!("{}: {}", path.display(), e.message())))?;
        Ok(Config {
            table,
            path: Some(path.to_path_buf()),
        })
    }

    /// `flag`, else the config value under `[command] key`.
    pub fn pick<T: DeserializeOwned>(
        &self,
        flag: Option<T>,
        command: &str,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        let Some(v) = self.table.get(command).and_then(|t| t.get(key)) else {
            return Ok(None);
        };
        v.clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| {
                let file = self
                    .path
                    .as_deref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default();
                CliError::usage(format!(
                    "--{key}: bad value in {file} [{command}]: {}",
                    e.message()
                ))
            })
    }
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::usage(format!("--{flag} is required")))
}

fn positive(flag: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage(format!(
            "--{flag}: must be a positive finite number, got {v}"
        )))
    }
}

fn parse_flag<T: FromStr>(flag: &str, text: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    text.parse()
        .map_err(|e| CliError::usage(format!("--{flag}: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::Split(a) => split_cmd(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Tune(a) => tune(&cfg, a),
        Command::ReproduceTable1(a) => table1(&cfg, a),
    }
}

fn synth(cfg: &Config, a: SynthArgs) -> Result<(), CliError> {
    let mean_p2 = require(cfg.pick(a.mean_p2, "synth", "mean-p2")?, "mean-p2")?;
    if !mean_p2.is_finite() {
        return Err(CliError::usage(format!(
            "--mean-p2: must be finite, got {mean_p2}"
        )));
    }
    let seed = cfg.pick(a.seed, "synth", "seed")?.unwrap_or(0);
    let data =
        synth_generate(&SynthSpec { mean_p2, seed }).map_err(|e| CliError::core("synth", e))?;
    data.write_csv(&a.out)
        .map_err(|e| CliError::core_at(&a.out, e))?;
    println!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

fn split_cmd(cfg: &Config, a: SplitArgs) -> Result<(), CliError> {
    let mode = cfg
        .pick(a.mode, "split", "mode")?
        .unwrap_or_else(|| "single-training-set".into());
    let seed = cfg.pick(a.seed, "split", "seed")?.unwrap_or(0);
    let test_fraction: Fraction = match cfg.pick(a.test_fraction, "split", "test-fraction")? {
        Some(t) => parse_flag("test-fraction", &t)?,
        None => Fraction::new(3, 10).expect("nonzero denominator"),
    };
    let mode = match mode.as_str() {
        "single-training-set" | "single" => {
            let lf = match cfg.pick(a.labeled_fraction, "split", "labeled-fraction")? {
                Some(t) => parse_flag("labeled-fraction", &t)?,
                None => Fraction::new(1, 4).expect("nonzero denominator"),
            };
            SplitMode::SingleTrainingSet {
                labeled_fraction: lf,
            }
        }
        "case-control" => {
            let gp = require(
                cfg.pick(a.gamma_prime, "split", "gamma-prime")?,
                "gamma-prime",
            )?;
            SplitMode::CaseControl {
                gamma_prime: parse_flag("gamma-prime", &gp)?,
            }
        }
        other => {
            return Err(CliError::usage(format!(
                "--mode: unknown split mode `{other}`"
            )))
        }
    };
    let spec = SplitSpec {
        mode,
        test_fraction,
        seed,
    };
    let data = EvalDataset::read_csv(&a.input).map_err(|e| CliError::core_at(&a.input, e))?;
    let parts = split(&data, &spec).map_err(|e| CliError::core("split", e))?;
    parts
        .train
        .write_csv(&a.train_out)
        .map_err(|e| CliError::core_at(&a.train_out, e))?;
    parts
        .test
        .write_csv(&a.test_out)
        .map_err(|e| CliError::core_at(&a.test_out, e))?;
    println!(
        "train n_p={} n_u={} label_frequency={:.4}; test n={}",
        parts.train.n_p(),
        parts.train.n_u(),
        parts.label_frequency(),
        parts.test.len()
    );
    Ok(())
}

fn train(cfg: &Config, a: TrainArgs) -> Result<(), CliError> {
    const C: &str = "train";
    let kind: ModelKind = parse_flag("model", &require(cfg.pick(a.model, C, "model")?, "model")?)?;
    let lambda = positive("lambda", cfg.pick(a.lambda, C, "lambda")?.unwrap_or(1.0))?;
    let hp = Hyperparams {
        cp: positive("cp", cfg.pick(a.cp, C, "cp")?.unwrap_or(1.0))?,
        cu: positive("cu", cfg.pick(a.cu, C, "cu")?.unwrap_or(0.1))?,
        lambda,
        mu1: positive("mu1", cfg.pick(a.mu1, C, "mu1")?.unwrap_or(1.0))?,
        knn: KnnParams::new(
            cfg.pick(a.knn, C, "knn")?.unwrap_or(5),
            positive("sigma", cfg.pick(a.sigma, C, "sigma")?.unwrap_or(1.0))?,
        ),
    };
    if hp.knn.k == 0 {
        return Err(CliError::usage("--knn: must be at least 1"));
    }
    let stop = StopCriteria {
        tol: cfg.pick(a.tol, C, "tol")?.unwrap_or(1e-6),
        max_iter: cfg.pick(a.max_iter, C, "max-iter")?.unwrap_or(2000),
        record_trace: false,
    };
    if !(stop.tol >= 0.0) {
        return Err(CliError::usage(format!(
            "--tol: must be non-negative, got {}",
            stop.tol
        )));
    }
    let default_kernel = if kind.is_kernel() { "rbf" } else { "none" };
    let kernel_name = cfg
        .pick(a.kernel, C, "kernel")?
        .unwrap_or_else(|| default_kernel.into());
    let kernel = match kernel_name.as_str() {
        "none" => None,
        "rbf" => Some(KernelSpec::Rbf {
            width: positive("width", cfg.pick(a.width, C, "width")?.unwrap_or(lambda))?,
        }),
        "linear-via-b" => Some(KernelSpec::LinearViaB { b_params: hp }),
        "precomputed" => Some(KernelSpec::Precomputed),
        other => {
            return Err(CliError::usage(format!(
                "--kernel: unknown kernel `{other}`"
            )))
        }
    };
    if kind.is_kernel() != kernel.is_some() {
        return Err(CliError::usage(format!(
            "--kernel: `{kernel_name}` does not fit model kind {kind}"
        )));
    }

    let data = PUDataset::read_csv(&a.data).map_err(|e| CliError::core_at(&a.data, e))?;
    hp.knn
        .validate(data.n())
        .map_err(|e| CliError::core("--knn", e))?;
    let (model, report) = if let Some(KernelSpec::Precomputed) = kernel {
        let path = require(cfg.pick(a.gram, C, "gram")?, "gram")?;
        let file = fs::File::open(&path).map_err(|e| CliError::file(&path, e))?;
        let gram = read_gram_csv(file).map_err(|e| CliError::core_at(&path, e))?;
        if kind == ModelKind::PualKernel {
            let (m, r) = fit_kernel_with_gram(&data, gram, &hp, &stop)
                .map_err(|e| CliError::core("train", e))?;
            (Classifier::Kernel(m), Some(r))
        } else {
            let m = fit_gllc_kernel_with_gram(&data, gram, &hp)
                .map_err(|e| CliError::core("train", e))?;
            (m.into(), None)
        }
    } else {
        let problem =
            TrainingProblem::new(&data, hp.knn.k, true).map_err(|e| CliError::core("train", e))?;
        fit_model(&problem, kind, &hp, kernel.as_ref(), &stop)
            .map_err(|e| CliError::core("train", e))?
    };
    let env = ModelEnvelope::new(kind, hp, &model, report.as_ref());
    let bytes = env
        .save(&a.out)
        .map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    let mut line = format!("saved {kind} model to {} ({bytes} bytes", a.out.display());
    if let Classifier::Kernel(m) = &model {
        line += &format!(
            ", retains {}x{} training features",
            m.train_features.nrows(),
            m.train_features.ncols()
        );
    }
    if let Some(r) = &report {
        line += &format!(", iterations={} converged={}", r.iterations, r.converged);
    }
    println!("{line})");
    Ok(())
}

fn load_model(path: &Path) -> Result<Classifier, CliError> {
    ModelEnvelope::load(path)
        .and_then(|env| env.classifier())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn predict(a: PredictArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let x = read_features_csv(&a.data).map_err(|e| CliError::core_at(&a.data, e))?;
    let pred = model
        .predict(x.view())
        .map_err(|e| CliError::core("predict", e))?;
    let mut out = String::from("score,label\n");
    for (s, l) in pred.scores.iter().zip(&pred.labels) {
        out += &format!("{s},{}\n", l.sign());
    }
    fs::write(&a.out, out).map_err(|e| CliError::file(&a.out, e))?;
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<Label>, CliError> {
    let bad = |msg: String| CliError::data(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| bad("missing `label` column".into()))?;
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let tok = &rec[col];
        let sign: i64 = tok
            .trim_start_matches('+')
            .parse()
            .map_err(|_| bad(format!("bad label `{tok}`")))?;
        labels.push(Label::from_sign(sign).ok_or_else(|| bad(format!("bad label `{tok}`")))?);
    }
    Ok(labels)
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let predicted = read_predictions(&a.preds)?;
    let truth = EvalDataset::read_csv(&a.truth).map_err(|e| CliError::core_at(&a.truth, e))?;
    let c = ConfusionCounts::from_labels(&predicted, truth.labels())
        .map_err(|e| CliError::core("eval", e))?;
    println!(
        "f1={} tp={} fp={} fn={} tn={} n={}",
        pual_core::f1_score(&c),
        c.tp,
        c.fp,
        c.r#fn,
        c.tn,
        c.total()
    );
    Ok(())
}

fn tune(cfg: &Config, a: TuneArgs) -> Result<(), CliError> {
    const C: &str = "tune";
    let kind: ModelKind = parse_flag(
        "model",
        &cfg.pick(a.model, C, "model")?
            .unwrap_or_else(|| "pual-linear".into()),
    )?;
    let preset = cfg
        .pick(a.preset, C, "preset")?
        .unwrap_or_else(|| "real".into());
    let grid = GridSpec::preset(&preset).map_err(|e| CliError::usage(format!("--preset: {e}")))?;
    let scenario: PufScenario = parse_flag(
        "scenario",
        &cfg.pick(a.scenario, C, "scenario")?
            .unwrap_or_else(|| "single-training-set".into()),
    )?;
    let folds = cfg.pick(a.folds, C, "folds")?.unwrap_or(4);
    if folds < 2 {
        return Err(CliError::usage(format!(
            "--folds: need at least 2, got {folds}"
        )));
    }
    let seed = cfg.pick(a.seed, C, "seed")?.unwrap_or(0);
    let greedy = cfg.pick(a.greedy, C, "greedy")?.unwrap_or(preset == "real");
    let mut learner = ModelLearner::new(kind);
    learner.kernel = match cfg.pick(a.kernel, C, "kernel")?.as_deref() {
        None | Some("rbf") => KernelChoice::Rbf,
        Some("linear-via-b") => KernelChoice::LinearViaB,
        Some(other) => {
            return Err(CliError::usage(format!(
                "--kernel: `{other}` cannot be tuned"
            )))
        }
    };
    let data = PUDataset::read_csv(&a.data).map_err(|e| CliError::core_at(&a.data, e))?;
    let mut result = grid_search(&data, &grid, &learner, folds, scenario, seed)
        .map_err(|e| CliError::core("tune", e))?;
    if greedy {
        result = greedy_refine(&data, result, &learner, scenario)
            .map_err(|e| CliError::core("tune", e))?;
    }
    let text = toml::to_string(&result).map_err(|e| CliError::data(e.to_string()))?;
    fs::write(&a.out, text).map_err(|e| CliError::file(&a.out, e))?;
    let b = result.best;
    println!(
        "best lambda={} sigma={} cu={} puf={} (grid {} candidates, greedy steps {})",
        b.lambda,
        b.sigma,
        b.cu,
        b.score,
        result.grid_scores.len(),
        result.greedy_trace.len() - 1
    );
    Ok(())
}

fn table1(cfg: &Config, a: Table1Args) -> Result<(), CliError> {
    const C: &str = "reproduce-table1";
    let seed = cfg.pick(a.seed, C, "seed")?.unwrap_or(0);
    let mut t = Table1Config::new(seed, a.reduced_grid);
    t.standardize = !(a.no_standardize || cfg.pick(None, C, "no-standardize")?.unwrap_or(false));
    t.rbf = a.rbf || cfg.pick(None, C, "rbf")?.unwrap_or(false);
    t.folds = cfg.pick(a.folds, C, "folds")?.unwrap_or(4);
    if t.folds < 2 {
        return Err(CliError::usage(format!(
            "--folds: need at least 2, got {}",
            t.folds
        )));
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::file(&a.out_dir, e))?;
    let report = reproduce(&t, |r| {
        eprintln!(
            "mean_p2={} dataset={} pual_f1={:.2} gllc_f1={:.2}",
            r.mean_p2, r.index, r.pual.f1, r.gllc.f1
        );
    })
    .map_err(|e| CliError::core("reproduce-table1", e))?;
    let path = a.out_dir.join("table1.csv");
    let mut f = fs::File::create(&path).map_err(|e| CliError::file(&path, e))?;
    f.write_all(report.render().as_bytes())
        .map_err(|e| CliError::file(&path, e))?;
    print!("{}", report.render_table());
    println!("report written to {}", path.display());
    Ok(())
}
