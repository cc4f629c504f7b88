//! The `hscf` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime failure
//! (I/O, failed gradient check, internal error).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    evaluate_task, export_report, group_mean_sfc, stage_difference, stage_pair_report,
    AnalysisReport, ThresholdScope,
};
use crate::data::{
    empirical_group_mean, generate_synthetic_cohort, load_cohort, save_cohort, split_cohort,
    Cohort, Stage, Task,
};
use crate::error::HscfError;
use crate::gradcheck::{check_model_gradients, GradCheckOptions};
use crate::tape::OpKind;
use crate::train::{fit_with, load_checkpoint, save_checkpoint, TrainConfig, TrainingMeta};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hscf",
    version,
    about = "Fuse structural and functional brain connectivity for MCI stage classification"
)]
pub struct Cli {
    /// Worker threads (falls back to HSCF_THREADS, then all cores).
    #[arg(long, global = true, env = "HSCF_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort with planted stage differences.
    Generate(GenerateArgs),
    /// Train a model and write a checkpoint plus a JSON-lines report.
    Train(TrainArgs),
    /// Print classification metrics of a checkpoint as JSON.
    Eval(EvalArgs),
    /// Stage-difference analysis of group-mean connectivity.
    Analyze(AnalyzeArgs),
    /// Finite-difference check of every parameter gradient on a small model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 76)]
    pub subjects_per_class: usize,
    #[arg(long, default_value_t = 90)]
    pub rois: usize,
    #[arg(long, default_value_t = 0.4)]
    pub signal: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cohort directory or manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines report path (default: checkpoint path with `.report.jsonl`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub separate_universal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalSplit {
    /// The held-out split recorded in the checkpoint.
    Test,
    /// Every subject of the task's two classes.
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the task the checkpoint was trained on.
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
    pub split: EvalSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Source {
    /// Eval-mode fused connectivity of a trained model.
    Model,
    /// Mean of the input SC and FC, no model needed.
    Input,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_if_eq("source", "model"))]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    pub quantile: f64,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long, value_enum, default_value_t = Source::Model)]
    pub source: Source,
    #[arg(long, value_enum, default_value_t = Scope::Pooled)]
    pub threshold_scope: Scope,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Pooled,
    PerDirection,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub rois: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub separate_universal: bool,
    /// Corrupt the backward rule of one op kind (exercises the checker).
    #[arg(long, hide = true)]
    pub fault: Option<OpKind>,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<HscfError>() {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        Some(_) => EXIT_RUNTIME,
        None if err.downcast_ref::<Usage>().is_some() => EXIT_USAGE,
        None => EXIT_RUNTIME,
    }
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be positive".into()).into());
        }
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let cohort = generate_synthetic_cohort(a.seed, a.subjects_per_class, a.rois, a.signal)?;
    let manifest = save_cohort(&cohort, &a.out)?;
    println!("wrote {} subjects to {}", cohort.len(), manifest.display());
    Ok(())
}

fn train_config(a: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            if !path.exists() {
                return Err(HscfError::MissingFile { path: path.clone() }.into());
            }
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg: TrainConfig = serde_json::from_str(&text)
                .map_err(|e| HscfError::json(format!("parsing {}", path.display()), e))?;
            cfg
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.task {
        cfg.task = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.eval_every {
        cfg.eval_every = v;
    }
    if let Some(v) = a.train_fraction {
        cfg.train_fraction = v;
    }
    if a.separate_universal {
        cfg.separate_universal = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_report_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".report.jsonl");
    ckpt.with_file_name(name)
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| HscfError::io(format!("creating {}", parent.display()), e))?;
    }
    Ok(())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let cfg = train_config(&a)?;
    let cohort = load_cohort(&a.data)?;
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| default_report_path(&a.out));
    create_parent(&report_path)?;
    let mut sink = fs::File::create(&report_path)
        .map_err(|e| HscfError::io(format!("creating {}", report_path.display()), e))?;
    let mut write_err = None;
    let out = fit_with(&cfg, &cohort, |record| {
        let line = serde_json::to_string(record).expect("epoch records always serialize");
        if let Err(e) = writeln!(sink, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(HscfError::io(format!("writing {}", report_path.display()), e).into());
    }
    save_checkpoint(&out.model, &TrainingMeta::from_config(&cfg), &a.out)?;
    let summary = serde_json::json!({
        "checkpoint": a.out,
        "report": report_path,
        "n_train": out.report.n_train,
        "n_test": out.report.n_test,
        "final_eval": out.report.final_eval,
        "wall_clock_secs": out.report.wall_clock_secs,
    });
    println!("{summary}");
    Ok(())
}

/// The cohort a checkpoint was evaluated on during training: the held-out
/// split when the checkpoint records its seed and train fraction.
fn eval_cohort(
    cohort: &Cohort,
    meta: &TrainingMeta,
    task: Task,
    split: EvalSplit,
) -> anyhow::Result<Cohort> {
    match (split, meta.seed, meta.train_fraction) {
        (EvalSplit::Test, Some(seed), Some(fraction)) => {
            Ok(split_cohort(cohort, task, fraction, seed)?.1)
        }
        (EvalSplit::Test, _, _) => bail!(HscfError::InvalidArgument(
            "checkpoint records no split; pass --split all".into()
        )),
        (EvalSplit::All, _, _) => Ok(cohort.for_task(task)),
    }
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let (model, meta) = load_checkpoint(&a.ckpt)?;
    let cohort = load_cohort(&a.data)?;
    check_rois(model.config.n_rois, cohort.n_rois())?;
    let task = a.task.or(meta.task).unwrap_or(Task::NcVsEmci);
    let subset = eval_cohort(&cohort, &meta, task, a.split)?;
    let result = evaluate_task(&model, &subset, task)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn check_rois(expected: usize, found: usize) -> anyhow::Result<()> {
    if expected != found {
        return Err(HscfError::RoiMismatch { expected, found }.into());
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> anyhow::Result<()> {
    let cohort = load_cohort(&a.data)?;
    for stage in Stage::ALL {
        if cohort.count(stage) == 0 {
            return Err(HscfError::EmptyClass(stage.to_string()).into());
        }
    }
    let scope = match a.threshold_scope {
        Scope::Pooled => ThresholdScope::Pooled,
        Scope::PerDirection => ThresholdScope::PerDirection,
    };
    let (means, task, metrics, source) = match a.source {
        Source::Input => {
            let means = Stage::ALL
                .iter()
                .map(|&s| empirical_group_mean(&cohort, s))
                .collect::<crate::error::Result<Vec<_>>>()?;
            (means, None, None, "input")
        }
        Source::Model => {
            let path = a
                .ckpt
                .as_ref()
                .ok_or_else(|| Usage("--ckpt is required with --source model".into()))?;
            let (model, meta) = load_checkpoint(path)?;
            check_rois(model.config.n_rois, cohort.n_rois())?;
            let means = Stage::ALL
                .iter()
                .map(|&s| group_mean_sfc(&model, &cohort, s))
                .collect::<crate::error::Result<Vec<_>>>()?;
            let metrics = match meta.task {
                Some(task) => {
                    let subset = eval_cohort(&cohort, &meta, task, EvalSplit::Test)?;
                    (!subset.is_empty())
                        .then(|| evaluate_task(&model, &subset, task))
                        .transpose()?
                }
                None => None,
            };
            (means, meta.task, metrics, "model")
        }
    };
    let (nc, emci, lmci) = (&means[0], &means[1], &means[2]);
    let mut pairs = Vec::new();
    for (from, to, earlier, later) in [
        (Stage::Nc, Stage::Emci, nc, emci),
        (Stage::Emci, Stage::Lmci, emci, lmci),
    ] {
        let diff = stage_difference(later, earlier)?;
        pairs.push(stage_pair_report(
            &diff,
            from,
            to,
            &cohort.atlas,
            a.quantile,
            a.top_k,
            scope,
        )?);
    }
    let report = AnalysisReport {
        task,
        source: source.to_string(),
        metrics,
        stage_pairs: pairs,
    };
    export_report(&report, &a.out)?;
    for pair in &report.stage_pairs {
        println!(
            "{} -> {} (threshold {:.6}, {} selected)",
            pair.from, pair.to, pair.threshold, pair.selected
        );
        for c in &pair.increased {
            println!("  + {} {:+.6}", c.label(), c.delta);
        }
        for c in &pair.decreased {
            println!("  - {} {:+.6}", c.label(), c.delta);
        }
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> anyhow::Result<()> {
    let opts = GradCheckOptions {
        n_rois: a.rois,
        seed: a.seed,
        separate_universal: a.separate_universal,
        fault: a.fault,
        ..GradCheckOptions::default()
    };
    let report = check_model_gradients(&opts)?;
    for p in &report.params {
        let status = match (p.exercised(), p.worst_rel_error < report.tolerance) {
            (false, _) => "FAIL (zero gradient)",
            (true, true) => "ok",
            (true, false) => "FAIL",
        };
        println!(
            "{:<20} {:>4} coords  worst rel err {:.3e}  {status}",
            p.name, p.coords, p.worst_rel_error
        );
    }
    let worst = report.worst().map(|p| p.worst_rel_error).unwrap_or(0.0);
    if report.passed() {
        println!(
            "PASS: {} coordinates, worst relative error {worst:.3e}",
            report.coords()
        );
        Ok(())
    } else {
        let failing: Vec<&str> = report
            .params
            .iter()
            .filter(|p| !p.passed(report.tolerance))
            .map(|p| p.name.as_str())
            .collect();
        println!("FAIL: worst relative error {worst:.3e}");
        bail!("gradient check failed for {}", failing.join(", "))
    }
}
