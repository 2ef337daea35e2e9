//! `cora` command line. Every subcommand reads an optional config file,
//! applies flag overrides and writes under the run directory:
//!
//! ```text
//! <out>/config.toml          effective configuration
//! <out>/metadata.json        command and timestamps
//! <out>/data/                series.csv, schema.json, ground_truth.json
//! <out>/checkpoints/         backbone.json, adapter.json
//! <out>/metrics/             pretrain_loss.csv, train_log.json, loss_curve.csv, metrics.json
//! <out>/reports/             granger.json, gc_windows.csv, gc_histogram.csv,
//!                            ablation.json, ablation.csv, summary.json, summary.md
//! ```

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::{
    load_dataset, prepare, prepare_windows, pretrain, run_ablation, adapt_and_evaluate, evaluate, DataSource,
    ExperimentConfig, HarnessError, TrainingLog,
};
use crate::adapter::{AdapterParams, Variant};
use crate::backbone::Backbone;
use crate::datagen::{write_csv, write_schema};
use crate::granger::{windowed_gc_report_with, GrangerReport};

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "cora", version, about = "Covariate-aware adaptation of a frozen forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    variant: Option<String>,
    /// Single learning rate replacing the grid.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "few-shot")]
    few_shot: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset, its schema and the planted structure.
    Generate(Common),
    /// Pretrain the backbone on the target series.
    Pretrain(Common),
    /// Train an adapter around the saved backbone.
    Adapt(Common),
    /// Test metrics of the saved adapter.
    Eval(Common),
    /// Granger–Geweke report against the saved adapter's gate.
    Granger(Common),
    /// Variant × seed sweep.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// `all` or a comma-separated list of variants.
        #[arg(long, default_value = "all")]
        variants: String,
        /// Number of consecutive seeds starting at the base seed.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Collect metrics and reports into one summary.
    Report(Common),
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Generate(c) => with_run("generate", &c, generate),
        Command::Pretrain(c) => with_run("pretrain", &c, cmd_pretrain),
        Command::Adapt(c) => with_run("adapt", &c, adapt),
        Command::Eval(c) => with_run("eval", &c, eval),
        Command::Granger(c) => with_run("granger", &c, granger),
        Command::Ablate { common, variants, seeds } => {
            with_run("ablate", &common, |cfg, run| ablate(cfg, run, &variants, seeds))
        }
        Command::Report(c) => with_run("report", &c, report),
    }
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write(&self, rel: &str, text: &str) -> Result<(), HarnessError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        std::fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), HarnessError> {
        self.write(rel, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
    }

    fn require(&self, rel: &str, producer: &str) -> Result<PathBuf, HarnessError> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(HarnessError::MissingArtifact(format!("{} not found; run `cora {producer}` first", p.display())));
        }
        Ok(p)
    }

    fn read_json(&self, rel: &str) -> Option<serde_json::Value> {
        let text = std::fs::read_to_string(self.path(rel)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

fn effective_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(v) = &c.variant {
        cfg.adapter.variant = v.parse::<Variant>()?;
    }
    if let Some(lr) = c.lr {
        cfg.train.lr_grid = vec![lr];
    }
    if let Some(f) = c.few_shot {
        cfg.few_shot = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn with_run(
    name: &str,
    c: &Common,
    f: impl FnOnce(&ExperimentConfig, &RunDir) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    let cfg = effective_config(c)?;
    let run = RunDir { root: c.out.clone() };
    let started = unix_now();
    run.write("config.toml", &cfg.to_toml())?;
    f(&cfg, &run)?;
    run.write_json(
        "metadata.json",
        &serde_json::json!({
            "layout_version": LAYOUT_VERSION,
            "command": name,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "started_unix": started,
            "finished_unix": unix_now(),
        }),
    )
}

fn generate(cfg: &ExperimentConfig, run: &RunDir) -> Result<(), HarnessError> {
    if !matches!(cfg.data, DataSource::Synthetic(_)) {
        return Err(HarnessError::Config("generate needs a synthetic data source".into()));
    }
    let ds = load_dataset(cfg, cfg.primary_seed())?;
    std::fs::create_dir_all(run.path("data")).map_err(|e| HarnessError::io(&run.path("data"), e))?;
    write_csv(&ds.frame, &run.path("data/series.csv"))?;
    write_schema(&ds.frame, &run.path("data/schema.json"))?;
    run.write_json("data/ground_truth.json", &ds.truth)
}

const BACKBONE: &str = "checkpoints/backbone.json";
const ADAPTER: &str = "checkpoints/adapter.json";

fn cmd_pretrain(cfg: &ExperimentConfig, run: &RunDir) -> Result<(), HarnessError> {
    let seed = cfg.primary_seed();
    let ds = load_dataset(cfg, seed)?;
    let windows = prepare_windows(cfg, &ds.frame)?;
    let bb = pretrain(cfg, &windows, seed)?;
    run.write(BACKBONE, &(bb.to_json() + "\n"))?;
    let mut csv = String::from("epoch,train_loss,val_mse\n");
    for (i, l) in bb.meta().train_loss.iter().enumerate() {
        let v = bb.meta().val_mse.get(i).map(|v| format!("{v:?}")).unwrap_or_default();
        csv += &format!("{},{l:?},{v}\n", i + 1);
    }
    run.write("metrics/pretrain_loss.csv", &csv)
}

fn load_backbone(run: &RunDir) -> Result<Backbone, HarnessError> {
    Ok(Backbone::load(&run.require(BACKBONE, "pretrain")?)?)
}

fn load_adapter(run: &RunDir, bb: &Backbone) -> Result<AdapterParams, HarnessError> {
    let (params, hash) = AdapterParams::load(&run.require(ADAPTER, "adapt")?)?;
    if hash != bb.weights_hash() {
        return Err(HarnessError::MissingArtifact(format!(
            "{} was trained against a different backbone than {}",
            run.path(ADAPTER).display(),
            run.path(BACKBONE).display()
        )));
    }
    Ok(params)
}

fn loss_curve_csv(log: &TrainingLog) -> String {
    let mut s = String::from("lr,epoch,train_loss,val_mse\n");
    for r in &log.runs {
        for e in &r.epochs {
            let t = e.train_loss.map(|t| format!("{t:?}")).unwrap_or_default();
            s += &format!("{:?},{},{t},{:?}\n", r.lr, e.epoch, e.val_mse);
        }
    }
    s
}

fn adapt(cfg: &ExperimentConfig, run: &RunDir) -> Result<(), HarnessError> {
    let bb = load_backbone(run)?;
    let seed = cfg.primary_seed();
    let p = prepare(cfg, seed, Some(bb))?;
    let out = adapt_and_evaluate(cfg, &p.backbone, &p.embedded, cfg.adapter.variant, seed)?;
    run.write(ADAPTER, &(out.params.to_json(&p.backbone.weights_hash()) + "\n"))?;
    run.write_json("metrics/train_log.json", &out.log)?;
    run.write("metrics/loss_curve.csv", &loss_curve_csv(&out.log))
}

fn eval(cfg: &ExperimentConfig, run: &RunDir) -> Result<(), HarnessError> {
    let bb = load_backbone(run)?;
    let params = load_adapter(run, &bb)?;
    let seed = cfg.primary_seed();
    let p = prepare(cfg, seed, Some(bb))?;
    if p.embedded.manifest.names() != params.manifest().names() {
        return Err(HarnessError::Config("data covariates do not match the saved adapter".into()));
    }
    let n = cfg.eval.crps_samples;
    let baseline = AdapterParams::init(params.dims(), params.manifest(), Variant::WoCovariate, Default::default(), seed)?;
    run.write_json(
        "metrics/metrics.json",
        &serde_json::json!({
            "variant": params.variant(),
            "seed": seed,
            "covariates": params.manifest().names(),
            "gate_weights": params.gate_weights()?,
            "test": evaluate(&params, &p.backbone, &p.embedded.test, n, seed)?,
            "baseline_test": evaluate(&baseline, &p.backbone, &p.embedded.test, n, seed)?,
        }),
    )
}

fn granger_csvs(rep: &GrangerReport) -> (String, String) {
    let mut hist = String::from("bin_low,bin_high,count\n");
    for (lo, c) in GrangerReport::bin_edges().iter().zip(&rep.histogram) {
        hist += &format!("{lo:?},{:?},{c}\n", lo + 2.0 / rep.histogram.len() as f64);
    }
    let names: Vec<String> = rep.covariates.iter().map(|c| format!("gc_{}", c.name)).collect();
    let mut win = format!("start,r,degenerate,{}\n", names.join(","));
    for w in &rep.windows {
        let gcs: Vec<String> = w.gc.iter().map(|g| format!("{g:?}")).collect();
        win += &format!("{},{:?},{},{}\n", w.start, w.r, w.degenerate, gcs.join(","));
    }
    (hist, win)
}

fn granger(cfg: &ExperimentConfig, run: &RunDir) -> Result<(), HarnessError> {
    let bb = load_backbone(run)?;
    let params = load_adapter(run, &bb)?;
    let ds = load_dataset(cfg, cfg.primary_seed())?;
    let windows = prepare_windows(cfg, &ds.frame)?;
    let rep = windowed_gc_report_with(&ds.frame, &windows.test, &params.gate_weights()?, cfg.granger.l_max, cfg.granger.criterion)?;
    let (hist, win) = granger_csvs(&rep);
    run.write("reports/granger.json", &(rep.to_json() + "\n"))?;
    run.write("reports/gc_histogram.csv", &hist)?;
    run.write("reports/gc_windows.csv", &win)
}

fn parse_variants(s: &str) -> Result<Vec<Variant>, HarnessError> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    Ok(s.split(',').map(|v| v.trim().parse::<Variant>()).collect::<Result<_, _>>()?)
}

fn ablate(cfg: &ExperimentConfig, run: &RunDir, variants: &str, seeds: Option<usize>) -> Result<(), HarnessError> {
    let variants = parse_variants(variants)?;
    let seeds: Vec<u64> = match seeds {
        Some(0) => return Err(HarnessError::Config("--seeds must be at least 1".into())),
        Some(n) => (0..n as u64).map(|k| cfg.primary_seed() + k).collect(),
        None => cfg.seeds.clone(),
    };
    let table = run_ablation(cfg, &variants, &seeds)?;
    run.write_json("reports/ablation.json", &table)?;
    run.write("reports/ablation.csv", &table.to_csv())
}

fn report(_cfg: &ExperimentConfig, run: &RunDir) -> Result<(), HarnessError> {
    let metrics = run.read_json("metrics/metrics.json");
    let granger = run.read_json("reports/granger.json");
    let ablation = run.read_json("reports/ablation.json");
    if metrics.is_none() && granger.is_none() && ablation.is_none() {
        return Err(HarnessError::MissingArtifact(format!(
            "no metrics or reports under {}; run eval, granger or ablate first",
            run.root.display()
        )));
    }
    let mut md = String::from("# Run summary\n");
    if let Some(m) = &metrics {
        md += &format!(
            "\n## Test metrics ({})\n\n| model | MSE | MAE |\n|---|---|---|\n| adapted | {} | {} |\n| frozen backbone | {} | {} |\n",
            m["variant"].as_str().unwrap_or("?"),
            m["test"]["mse"],
            m["test"]["mae"],
            m["baseline_test"]["mse"],
            m["baseline_test"]["mae"]
        );
    }
    if let Some(g) = &granger {
        md += &format!("\n## Gate vs Granger–Geweke\n\nmedian r = {} over {} windows\n", g["median_r"], g["windows"].as_array().map_or(0, Vec::len));
    }
    if let Some(a) = &ablation {
        md += "\n## Ablation (test MSE / MAE median)\n\n| variant | ok | failed | MSE | MAE |\n|---|---|---|---|---|\n";
        for r in a["rows"].as_array().into_iter().flatten() {
            md += &format!(
                "| {} | {} | {} | {} | {} |\n",
                r["variant"].as_str().unwrap_or("?"),
                r["ok"],
                r["failed"],
                r["mse"]["median"],
                r["mae"]["median"]
            );
        }
    }
    run.write_json("reports/summary.json", &serde_json::json!({ "metrics": metrics, "granger": granger, "ablation": ablation }))?;
    run.write("reports/summary.md", &md)
}

