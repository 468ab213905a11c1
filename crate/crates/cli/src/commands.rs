use std::fs;
use std::path::Path;

use autoprecoder::autonet::{load_checkpoint, save_checkpoint, AutoPrecoderParams};
use autoprecoder::config::{ExperimentConfig, Precision};
use autoprecoder::datapipe::{load_dataset, save_dataset, Dataset};
use autoprecoder::experiment::{self, bench_csv, eval_csv};
use autoprecoder::trainer::{evaluate, history_csv};
use autoprecoder::{Error, Real};
use serde_json::{json, Value};

use crate::Common;

pub enum CliError {
    Core(Error),
    SelftestFailed(usize),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::SelftestFailed(_) => "selftest",
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::SelftestFailed(n) => format!("{n} self-test check(s) failed"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult = Result<(), CliError>;

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_toml_str(&fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Creates the output directory and writes the resolved config next to the results.
fn prepare(common: &Common) -> Result<ExperimentConfig, CliError> {
    let cfg = load_config(common)?;
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("config.toml"), cfg.to_toml_string())?;
    println!("{}", experiment::pilot_accounting(&cfg));
    Ok(cfg)
}

fn echo(cfg: &ExperimentConfig, command: &str, extra: Value) -> Value {
    json!({
        "command": command,
        "seed": cfg.seed,
        "pilots": cfg.dims.m_t * cfg.dims.m_r,
        "exhaustive_pilots": cfg.dims.n_t * cfg.dims.n_r,
        "config": cfg,
        "results": extra,
    })
}

fn write_json(path: &Path, v: &Value) -> std::io::Result<()> {
    fs::write(path, serde_json::to_string_pretty(v).expect("json") + "\n")
}

fn write_text(path: &Path, s: &str) -> std::io::Result<()> {
    fs::write(path, s)
}

pub fn generate(common: &Common) -> CliResult {
    let cfg = prepare(common)?;
    let ds = experiment::generate(&cfg)?;
    save_dataset(&ds, &common.out.join("dataset.apds"))?;
    write_json(&common.out.join("dataset.json"), &echo(&cfg, "generate", ds.describe()))?;
    println!("wrote {} samples to {}", ds.len(), common.out.join("dataset.apds").display());
    Ok(())
}

fn load_checked_dataset(cfg: &ExperimentConfig, path: &Path) -> Result<Dataset, Error> {
    let ds = load_dataset(path)?;
    experiment::check_dataset(cfg, &ds)?;
    Ok(ds)
}

pub fn train(common: &Common, dataset: &Path) -> CliResult {
    let cfg = prepare(common)?;
    let ds = load_checked_dataset(&cfg, dataset)?;
    match cfg.precision {
        Precision::F64 => train_as::<f64>(common, &cfg, &ds),
        Precision::F32 => train_as::<f32>(common, &cfg, &ds),
    }
}

fn train_as<T: Real>(common: &Common, cfg: &ExperimentConfig, ds: &Dataset) -> CliResult {
    let out = experiment::train_model::<T>(cfg, ds, |r| {
        eprintln!(
            "epoch {:>4}  train {:.5}  val {:.5}  tx {:.4}  rx {:.4}",
            r.epoch, r.train_loss, r.val_loss, r.val_tx_acc, r.val_rx_acc
        );
    })?;
    save_checkpoint(&out.params, &common.out.join("checkpoint.apnv"))?;
    write_text(&common.out.join("history.csv"), &history_csv(&out.history))?;
    write_json(&common.out.join("history.json"), &echo(cfg, "train", json!({ "epochs": out.history.len() })))?;

    let (train_set, _) = experiment::split_dataset(cfg, ds)?;
    let (_, val_idx) = autoprecoder::trainer::validation_split(train_set.len(), cfg.train.val_fraction, cfg.seed)?;
    let val = train_set.subset(&val_idx).examples::<T>();
    let refs: Vec<_> = val.iter().collect();
    // metrics of the checkpoint as stored on disk
    let stored = out.params.rounded_to_f32();
    let ev = evaluate(&stored, &refs)?;
    let chance = cfg.dims.n_rf_tx as f64 / cfg.dataset_dims().n_tx_beams as f64;
    let metrics = json!({
        "best_epoch": out.best_epoch,
        "initial_val_loss": out.initial_val_loss,
        "val_loss": ev.loss,
        "val_tx_acc": ev.tx_acc,
        "val_rx_acc": ev.rx_acc,
        "chance_tx_acc": chance,
    });
    write_json(&common.out.join("metrics.json"), &echo(cfg, "train", metrics))?;
    println!(
        "best epoch {} of {}: val tx {:.4} rx {:.4} (chance {:.4})",
        out.best_epoch,
        out.history.len(),
        ev.tx_acc,
        ev.rx_acc,
        chance
    );
    Ok(())
}

fn load_params<T: Real>(cfg: &ExperimentConfig, path: &Path) -> Result<AutoPrecoderParams<T>, Error> {
    let p = load_checkpoint::<T>(path)?;
    experiment::check_params(cfg, &p)?;
    Ok(p)
}

pub fn eval(common: &Common, checkpoint: &Path, dataset: &Path) -> CliResult {
    let cfg = prepare(common)?;
    match cfg.precision {
        Precision::F64 => eval_as::<f64>(common, &cfg, checkpoint, dataset),
        Precision::F32 => eval_as::<f32>(common, &cfg, checkpoint, dataset),
    }
}

fn eval_as<T: Real>(common: &Common, cfg: &ExperimentConfig, checkpoint: &Path, dataset: &Path) -> CliResult {
    let params = load_params::<T>(cfg, checkpoint)?;
    let ds = load_checked_dataset(cfg, dataset)?;
    let (_, test) = experiment::split_dataset(cfg, &ds)?;
    let test = experiment::eval_subset(cfg, &test);
    let rows = experiment::eval_grid(cfg, &params, &test, None)?;
    write_text(&common.out.join("eval.csv"), &eval_csv(&rows))?;
    write_json(&common.out.join("eval.json"), &echo(cfg, "eval", json!({ "test_samples": test.len(), "rows": rows })))?;
    print!("{}", eval_csv(&rows));
    Ok(())
}

pub fn compare_sensing(common: &Common, checkpoint: &Path, dataset: &Path) -> CliResult {
    let cfg = prepare(common)?;
    match cfg.precision {
        Precision::F64 => compare_as::<f64>(common, &cfg, checkpoint, dataset),
        Precision::F32 => compare_as::<f32>(common, &cfg, checkpoint, dataset),
    }
}

fn compare_as<T: Real>(common: &Common, cfg: &ExperimentConfig, checkpoint: &Path, dataset: &Path) -> CliResult {
    let learned = load_params::<T>(cfg, checkpoint)?;
    let ds = load_checked_dataset(cfg, dataset)?;
    let (train_set, test) = experiment::split_dataset(cfg, &ds)?;
    let test = experiment::eval_subset(cfg, &test);
    eprintln!("training head on random constant-modulus sensing beams");
    let random = experiment::random_sensing_baseline::<T>(cfg, &train_set, |r| {
        eprintln!("epoch {:>4}  val {:.5}  tx {:.4}  rx {:.4}", r.epoch, r.val_loss, r.val_tx_acc, r.val_rx_acc);
    })?;
    let random = random.params.rounded_to_f32();
    save_checkpoint(&random, &common.out.join("random_checkpoint.apnv"))?;
    let rep = experiment::compare_sensing(cfg, &learned, &random, &test)?;
    write_text(&common.out.join("sensing.csv"), &rep.variants_csv())?;
    write_text(&common.out.join("sensing_profile.csv"), &rep.profile_csv())?;
    write_json(&common.out.join("sensing.json"), &echo(cfg, "compare-sensing", serde_json::to_value(&rep).expect("json")))?;
    print!("{}", rep.variants_csv());
    Ok(())
}

pub fn oracle_bench(common: &Common) -> CliResult {
    let cfg = prepare(common)?;
    let rows = experiment::oracle_bench(&cfg)?;
    let mean_ratio = rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64;
    let greedy = rows.iter().map(|r| r.greedy_rate).sum::<f64>();
    let exhaustive = rows.iter().map(|r| r.exhaustive_rate).sum::<f64>();
    let same = rows.iter().filter(|r| r.same_selection).count();
    write_text(&common.out.join("oracle_bench.csv"), &bench_csv(&rows))?;
    let summary = json!({
        "channels": rows.len(),
        "mean_ratio": mean_ratio,
        "ratio_of_mean_rates": greedy / exhaustive,
        "same_selection": same,
    });
    write_json(&common.out.join("oracle_bench.json"), &echo(&cfg, "oracle-bench", summary))?;
    println!(
        "greedy/exhaustive: mean ratio {:.4}, ratio of means {:.4}, identical selections {}/{}",
        mean_ratio,
        greedy / exhaustive,
        same,
        rows.len()
    );
    Ok(())
}
