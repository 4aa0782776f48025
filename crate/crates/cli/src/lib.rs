//! Command-line experiment runner.

pub mod experiment;
pub mod manifest;
pub mod report;
pub mod runner;
pub mod sweep;
pub mod table;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use geossl::data::{fetch_dataset, load_dataset, LoadOptions};
use geossl::training::ExperimentConfig;
use sha2::{Digest, Sha256};

use crate::experiment::{parse_values, ExperimentFile};
use crate::manifest::{RunStatus, RunStore};
use crate::runner::{dataset_for, eval_run, evaluate_checkpoint, train_run};
use crate::sweep::{run_sweep, sweep_table, SweepOptions};

/// Exit status for invalid configs and arguments.
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "geossl", version, about = "Contrastive SSL with a transformation-regression module")]
pub struct Cli {
    /// Directory holding run artifacts.
    #[arg(long, global = true, default_value = "runs")]
    pub runs: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one run.
    Train(TrainArgs),
    /// Linear evaluation of a run or a checkpoint file.
    Eval(EvalArgs),
    /// Train and evaluate a grid over one config key and several seeds.
    Sweep(SweepArgs),
    /// Tables, CSV and plots from completed runs.
    Report(ReportArgs),
    /// Dataset management.
    Datasets {
        #[command(subcommand)]
        command: DatasetsCommand,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set b2.perspective=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run id; defaults to `<name>-<config hash>`.
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run id or path to a `.ckpt` file.
    pub target: String,
    /// Evaluate on another dataset, e.g. `svhn-6v9`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Evaluate every checkpoint instead of the last one.
    #[arg(long)]
    pub all: bool,
    /// Evaluate these checkpoint epochs.
    #[arg(long, value_delimiter = ',')]
    pub epoch: Vec<usize>,
    /// Also write the confusion matrix of the last evaluated checkpoint as CSV.
    #[arg(long)]
    pub confusion: bool,
    /// Override the linear-probe config, e.g. `--set epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Experiment file; its `[sweep]` table supplies defaults for the flags below.
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated values of the axis.
    #[arg(long)]
    pub values: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Sweep name; runs go to `<runs>/<name>/<value>/seed-<s>`.
    #[arg(long)]
    pub name: Option<String>,
    /// Cells trained in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
    Plot,
    All,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run ids or sweep names.
    #[arg(required = true)]
    pub runs_or_sweeps: Vec<String>,
    #[arg(long, value_enum, default_value = "all")]
    pub format: ReportFormat,
    /// Output directory.
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    #[arg(long, default_value = "learning curves")]
    pub title: String,
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
}

#[derive(Debug, Subcommand)]
pub enum DatasetsCommand {
    /// Download, verify and cache datasets.
    Fetch {
        #[arg(required = true)]
        names: Vec<String>,
        /// Dataset root (defaults to `$GEOSSL_DATA`, then `./data`).
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// List the known dataset names.
    List,
}

/// Error raised by the CLI itself for bad arguments.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_VALIDATION;
        }
        if let Some(g) = cause.downcast_ref::<geossl::Error>() {
            return match g {
                geossl::Error::Config(_) | geossl::Error::Range { .. } | geossl::Error::Disjointness(_) => EXIT_VALIDATION,
                geossl::Error::Divergence { .. } => EXIT_DIVERGENCE,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let store = RunStore::new(&cli.runs);
    match cli.command {
        Command::Train(a) => cmd_train(&store, a, out),
        Command::Eval(a) => cmd_eval(&store, a, out),
        Command::Sweep(a) => cmd_sweep(&store, a, out),
        Command::Report(a) => cmd_report(&store, a, out),
        Command::Datasets { command } => cmd_datasets(command, out),
    }
}

fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(cfg.to_toml()?.as_bytes()))[..8].to_string())
}

/// `<name>-<hash>`, or the first `-N` suffix not taken by a finished run.
fn default_run_id(store: &RunStore, cfg: &ExperimentConfig) -> Result<String> {
    let base = format!("{}-{}", cfg.name, config_hash(cfg)?);
    for k in 1.. {
        let id = if k == 1 { base.clone() } else { format!("{base}-{k}") };
        if !store.exists(&id) {
            return Ok(id);
        }
        let m = store.load(&id)?;
        if m.status != RunStatus::Completed && &m.config == cfg {
            return Ok(id);
        }
    }
    unreachable!()
}

pub fn cmd_train(store: &RunStore, a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let file = ExperimentFile::load(a.config.as_deref())?;
    let cfg = file.resolve(&a.set)?;
    let id = match a.run_id {
        Some(id) => id,
        None => default_run_id(store, &cfg)?,
    };
    if !a.quiet {
        eprintln!("run {id}: {} {:?} on {}, {} epochs", crate::report::variant_label(&cfg), cfg.preset, cfg.data.dataset, cfg.epochs);
    }
    let m = train_run(store, &id, &cfg, !a.quiet)?;
    writeln!(out, "run_id: {}", m.run_id)?;
    writeln!(out, "status: completed")?;
    writeln!(out, "final_epoch: {}", m.final_epoch.unwrap_or(0))?;
    writeln!(out, "param_hash: {}", m.param_hash.as_deref().unwrap_or(""))?;
    writeln!(out, "dir: {}", store.run_dir(&id).display())?;
    Ok(())
}

fn probe_config(base: &geossl::evaluation::LinearEvalConfig, sets: &[String]) -> Result<geossl::evaluation::LinearEvalConfig> {
    if sets.is_empty() {
        return Ok(base.clone());
    }
    let mut v = toml::Value::try_from(base)?;
    for s in sets {
        let (k, val) = geossl::training::parse_override(s)?;
        let t = v.as_table_mut().expect("table");
        if !t.contains_key(&k) {
            bail!(geossl::Error::Config(format!("unknown linear eval key `{k}`")));
        }
        t.insert(k, val);
    }
    let cfg: geossl::evaluation::LinearEvalConfig = v.try_into().map_err(|e| geossl::Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_eval(store: &RunStore, a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let as_path = Path::new(&a.target);
    if as_path.is_file() {
        let cfg = geossl::training::read_header(as_path)?.config;
        let ds = dataset_for(&cfg, a.dataset.as_deref())?;
        let probe = probe_config(&cfg.eval, &a.set)?;
        let rep = evaluate_checkpoint(as_path, &ds, &probe, cfg.seed)?;
        write!(out, "{}", rep.to_text(&ds.class_names))?;
        if a.confusion {
            let csv = as_path.with_extension(format!("{}.confusion.csv", ds.name));
            fs::write(&csv, rep.confusion_csv(&ds.class_names))?;
            writeln!(out, "confusion: {}", csv.display())?;
        }
        return Ok(());
    }
    if !store.exists(&a.target) {
        bail!("`{}` is neither a checkpoint file nor a run in {}", a.target, store.root.display());
    }
    let mut m = store.load(&a.target)?;
    let probe = probe_config(&m.config.eval, &a.set)?;
    let series = runner::series_for(store, &a.target)?;
    let epochs: Vec<usize> = if a.all {
        series.entries.iter().map(|e| e.epoch).collect()
    } else if !a.epoch.is_empty() {
        a.epoch.clone()
    } else {
        series.last().map(|e| vec![e.epoch]).unwrap_or_default()
    };
    let results = eval_run(store, &a.target, a.dataset.as_deref(), Some(&probe), Some(&epochs))?;
    let dataset = a.dataset.clone().unwrap_or_else(|| m.config.data.dataset.clone());
    let ds_names = load_class_names(&m.config, a.dataset.as_deref())?;
    let mut text = String::new();
    let mut curve = table::Table::new(["epoch", "accuracy (%)"]);
    for (e, r) in &results {
        curve.push(vec![e.to_string(), format!("{:.2}", r.accuracy * 100.0)]);
    }
    text.push_str(&format!("run {}  dataset {}\n\n", m.run_id, dataset));
    if results.len() > 1 {
        text.push_str(&curve.render());
        text.push('\n');
    }
    let (last_epoch, last) = results.last().expect("non-empty");
    text.push_str(&format!("epoch {last_epoch}\n"));
    text.push_str(&last.to_text(&ds_names));
    write!(out, "{text}")?;

    let dir = store.run_dir(&a.target);
    let reports = dir.join("reports");
    fs::create_dir_all(&reports)?;
    let rel = format!("reports/eval_{dataset}.txt");
    fs::write(dir.join(&rel), &text)?;
    m.add_report(rel);
    if a.confusion {
        let rel = format!("reports/confusion_{dataset}_epoch_{last_epoch:04}.csv");
        fs::write(dir.join(&rel), last.confusion_csv(&ds_names))?;
        writeln!(out, "confusion: {}", dir.join(&rel).display())?;
        m.add_report(rel);
    }
    store.save(&m)?;
    Ok(())
}

fn load_class_names(cfg: &ExperimentConfig, dataset: Option<&str>) -> Result<Vec<String>> {
    Ok(dataset_for(cfg, dataset)?.class_names)
}

pub fn cmd_sweep(store: &RunStore, a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let file = ExperimentFile::load(a.config.as_deref())?;
    let spec = file.sweep.clone().unwrap_or_default();
    let axis = a.axis.or(spec.axis).ok_or_else(|| usage("sweep needs --axis (or `axis` in the [sweep] table)"))?;
    let values = match &a.values {
        Some(v) => parse_values(v)?,
        None => spec.values.clone(),
    };
    let seeds = if a.seeds.is_empty() { spec.seeds.clone() } else { a.seeds.clone() };
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    if values.is_empty() {
        return Err(usage("sweep needs --values (or `values` in the [sweep] table)"));
    }
    let name = a.name.or(spec.name).unwrap_or_else(|| format!("sweep-{axis}"));
    let mut overrides = spec.set.clone();
    overrides.extend(a.set);
    let opts = SweepOptions { name, axis, values, seeds, overrides, jobs: a.jobs.max(1), confidence: a.confidence, progress: !a.quiet };
    let rec = run_sweep(store, &file, &opts)?;
    write!(out, "{}", sweep_table(&rec)?.render())?;
    for c in rec.cells.iter().filter(|c| !c.ok) {
        writeln!(out, "failed: {} = {} seed {}: {}", rec.axis, c.value, c.seed, c.error.as_deref().unwrap_or("unknown error"))?;
    }
    if rec.cells.iter().all(|c| !c.ok) {
        bail!("every sweep cell failed");
    }
    Ok(())
}

pub fn cmd_report(store: &RunStore, a: ReportArgs, out: &mut dyn Write) -> Result<()> {
    let runs = report::expand_targets(store, &a.runs_or_sweeps)?;
    let (variants, warnings) = report::collect_variants(store, &runs, a.confidence)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&a.out)?;
    let mut written = Vec::new();
    let want = |f: ReportFormat| a.format == f || a.format == ReportFormat::All;
    if want(ReportFormat::Text) {
        let t = report::comparison_table(&variants).render();
        write!(out, "{t}")?;
        let p = a.out.join("table.txt");
        fs::write(&p, &t)?;
        written.push(p);
    }
    if want(ReportFormat::Csv) {
        let p = a.out.join("curves.csv");
        fs::write(&p, report::curve_table(&variants).to_csv()?)?;
        written.push(p);
    }
    if want(ReportFormat::Plot) {
        let p = a.out.join("curves.svg");
        fs::write(&p, report::curves_svg(&variants, &a.title))?;
        written.push(p);
    }
    let index = serde_json::json!({
        "runs": runs,
        "variants": variants.iter().map(|v| serde_json::json!({"label": v.label, "runs": v.runs})).collect::<Vec<_>>(),
        "warnings": warnings,
        "files": written.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
    });
    fs::write(a.out.join("report.json"), serde_json::to_vec_pretty(&index)?)?;
    for p in &written {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

pub fn cmd_datasets(c: DatasetsCommand, out: &mut dyn Write) -> Result<()> {
    match c {
        DatasetsCommand::List => {
            for n in ["cifar10", "cifar100", "svhn", "svhn-6v9", "synthetic-shapes", "synthetic-arrows"] {
                writeln!(out, "{n}")?;
            }
        }
        DatasetsCommand::Fetch { names, root } => {
            for name in names {
                let spec: geossl::data::DatasetSpec = name.parse()?;
                if !spec.kind.is_synthetic() {
                    for p in fetch_dataset(&name, root.as_deref())? {
                        writeln!(out, "verified {}", p.display())?;
                    }
                }
                let opts = LoadOptions { root: root.clone(), ..LoadOptions::default() };
                let ds = load_dataset(&name, &opts)?;
                let (tr, te) = ds.split_sizes();
                let cache = ds.cache_path.as_ref().map_or("in memory".to_string(), |p| p.display().to_string());
                writeln!(out, "{name}: {} classes, train {tr}, test {te} ({cache})", ds.classes)?;
            }
        }
    }
    Ok(())
}
