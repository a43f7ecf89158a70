//! Run and sweep drivers: data loading, per-task checkpoints, metric rows,
//! sample grids and aggregate summaries.
//!
//! A run directory contains `config.resolved`, `task_<t>.ckpt`,
//! `grid_task_<t>.pgm`, `metrics.csv` and `manifest.json`. Rows are appended
//! and the manifest rewritten after every task, so a failed run keeps
//! everything up to its last completed task.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::autodiff::{seeded_rng, stream_rng, AdamConfig};
use crate::baselines::{run_strategy, Strategy};
use crate::config::RunConfig;
use crate::cvae::CvaeConfig;
use crate::data::{load_class_incremental, toy_stream, IdxFiles, TaskStream};
use crate::error::{Error, Result};
use crate::lifelong::{LearnerConfig, WeightOverrides};
use crate::metrics::{image_grid, ClassifierConfig, Evaluator, MetricsReport};

pub const METRICS_HEADER: &str = "task,strategy,seed,acc,frechet,seconds,labels";
pub const SUMMARY_HEADER: &str =
    "strategy,task,count,acc_mean,acc_std,frechet_mean,frechet_std,seconds_mean,seconds_std";
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Seed of the toy data and the reference feature extractor. Independent of
/// the run seed so every run of a benchmark is scored in the same space.
pub const DATA_SEED: u64 = 0;
const GRID_COLUMNS: usize = 10;
const STREAM_EVAL: u64 = 5;
const STREAM_GRID: u64 = 6;

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub task: usize,
    pub strategy: String,
    pub seed: u64,
    pub acc: f64,
    pub frechet: f64,
    /// Training wall-clock for the task.
    pub seconds: f64,
    /// Learned classes, `;`-separated.
    pub labels: String,
}

impl MetricsRow {
    pub fn label_count(&self) -> usize {
        self.labels.split(';').filter(|s| !s.is_empty()).count()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub config_hash: String,
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub complete: bool,
    pub tasks: Vec<MetricsReport>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub reports: Vec<MetricsReport>,
}

impl RunOutcome {
    pub fn final_report(&self) -> &MetricsReport {
        self.reports
            .last()
            .expect("a completed run has at least one task")
    }

    pub fn total_train_seconds(&self) -> f64 {
        self.reports.iter().map(|r| r.train_seconds).sum()
    }
}

/// Loads the configured task stream, truncated to `cfg.tasks`.
pub fn load_stream(cfg: &RunConfig, env_root: Option<&Path>) -> Result<TaskStream> {
    let stream = match cfg.dataset_dir(env_root)? {
        None => toy_stream(cfg.tasks, cfg.toy_samples, &mut seeded_rng(DATA_SEED))?,
        Some(dir) => load_class_incremental(&IdxFiles::in_dir(&dir), cfg.per_class_cap)?,
    };
    if cfg.tasks < stream.len() {
        stream.truncated(cfg.tasks)
    } else {
        Ok(stream)
    }
}

/// Reference feature extractor trained on every training image of `stream`.
pub fn build_evaluator(stream: &TaskStream, samples_per_class: usize) -> Result<Evaluator> {
    let real = stream.train_union(stream.len())?;
    let classifier = ClassifierConfig {
        seed: DATA_SEED,
        ..ClassifierConfig::default()
    };
    Evaluator::new(&real, classifier, samples_per_class)
}

pub fn cvae_config(cfg: &RunConfig) -> CvaeConfig {
    CvaeConfig {
        latent_dim: cfg.latent_dim,
        ..CvaeConfig::default()
    }
}

pub fn learner_config(cfg: &RunConfig) -> LearnerConfig {
    LearnerConfig {
        epochs: cfg.epochs_per_task,
        batch_size: cfg.batch_size,
        adam: AdamConfig {
            learning_rate: cfg.learning_rate as f32,
            ..AdamConfig::default()
        },
        likelihood: cfg.likelihood,
        feedback_sign: cfg.feedback_sign,
        overrides: WeightOverrides {
            lambda_r: cfg.lambda_r,
            lambda_f: cfg.lambda_f,
        },
        seed: cfg.seed,
        ..LearnerConfig::default()
    }
}

fn is_artifact(name: &str) -> bool {
    matches!(name, "config.resolved" | "metrics.csv" | "manifest.json")
        || (name.starts_with("task_") && name.ends_with(".ckpt"))
        || (name.starts_with("grid_task_") && name.ends_with(".pgm"))
}

/// Creates `dir`, refusing a non-empty one unless `force`; with `force`,
/// artifacts of an earlier run are removed and anything else is left alone.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        if !entries.is_empty() && !force {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
        for entry in entries {
            let name = entry.file_name();
            if is_artifact(&name.to_string_lossy()) {
                fs::remove_file(entry.path())?;
            }
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Loads data, builds the reference extractor and executes one run.
pub fn run(cfg: &RunConfig, force: bool, env_root: Option<&Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_output(&cfg.out, force)?;
    let stream = load_stream(cfg, env_root)?;
    let evaluator = build_evaluator(&stream, cfg.samples_per_class)?;
    run_with(cfg, &stream, &evaluator, force)
}

/// Executes one run against a prepared stream and evaluator.
pub fn run_with(
    cfg: &RunConfig,
    stream: &TaskStream,
    evaluator: &Evaluator,
    force: bool,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let dir = cfg.out.clone();
    prepare_output(&dir, force)?;
    fs::write(dir.join("config.resolved"), cfg.resolved())?;

    let mut csv = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("metrics.csv"))?;
    csv.write_record(METRICS_HEADER.split(','))?;
    csv.flush()?;
    let mut manifest = Manifest {
        code_version: CODE_VERSION.to_string(),
        config_hash: cfg.hash(),
        dataset: cfg.dataset.tag().to_string(),
        strategy: cfg.strategy.tag().to_string(),
        seed: cfg.seed,
        complete: false,
        tasks: Vec::new(),
    };
    write_manifest(&dir, &manifest)?;

    let real_test = stream.test_union(stream.len())?;
    let (_, reports) = run_strategy(
        cfg.strategy,
        stream,
        cvae_config(cfg),
        learner_config(cfg),
        |result, _task| {
            let t = result.task;
            let snapshot = &result.snapshot;
            snapshot.save(&dir.join(format!("task_{t}.ckpt")))?;

            let mut grid_rng = stream_rng(cfg.seed, STREAM_GRID + 1000 * t as u64);
            let mut samples = Vec::new();
            for &label in snapshot.labels() {
                samples.push(
                    snapshot
                        .decoder()
                        .sample(label, GRID_COLUMNS, &mut grid_rng)?,
                );
            }
            let images: Vec<&[f32]> = samples
                .iter()
                .flat_map(|s| s.data().chunks(s.shape()[1]))
                .collect();
            let side = (snapshot.decoder().image_dim() as f64).sqrt() as usize;
            let grid = image_grid(&images, side, snapshot.labels().len(), GRID_COLUMNS)?;
            fs::write(dir.join(format!("grid_task_{t}.pgm")), grid.to_pgm())?;

            let test = real_test.filter_classes(snapshot.labels());
            let mut eval_rng = stream_rng(cfg.seed, STREAM_EVAL + 1000 * t as u64);
            let report = evaluator.report(
                t,
                snapshot.decoder(),
                snapshot.labels(),
                &test,
                result.train_seconds,
                cfg.seed,
                &mut eval_rng,
            )?;
            info!(
                "{} seed {} task {t}: acc {:.2}% frechet {:.4} ({:.1}s train, {:.1}s eval)",
                cfg.strategy,
                cfg.seed,
                report.acc_percent,
                report.frechet,
                report.train_seconds,
                report.eval_seconds
            );
            csv.serialize(row_of(cfg, &report))?;
            csv.flush()?;
            manifest.tasks.push(report.clone());
            write_manifest(&dir, &manifest)?;
            Ok(report)
        },
    )?;
    manifest.complete = true;
    write_manifest(&dir, &manifest)?;
    Ok(RunOutcome { dir, reports })
}

fn row_of(cfg: &RunConfig, report: &MetricsReport) -> MetricsRow {
    MetricsRow {
        task: report.task,
        strategy: cfg.strategy.tag().to_string(),
        seed: cfg.seed,
        acc: report.acc_percent,
        frechet: report.frechet,
        seconds: report.train_seconds,
        labels: report
            .labels
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";"),
    }
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut f = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, manifest)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

// ── sweep ──────────────────────────────────────────────────────────────

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub task: usize,
    pub count: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub frechet_mean: f64,
    pub frechet_std: f64,
    pub seconds_mean: f64,
    pub seconds_std: f64,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunOutcome>,
    /// `(strategy, seed, error message)` of every failed cell.
    pub failures: Vec<(Strategy, u64, String)>,
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates rows per `(strategy, task)`.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.strategy.clone(), r.task))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((strategy, task), rs)| {
            let col =
                |f: fn(&MetricsRow) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (acc_mean, acc_std) = col(|r| r.acc);
            let (frechet_mean, frechet_std) = col(|r| r.frechet);
            let (seconds_mean, seconds_std) = col(|r| r.seconds);
            SummaryRow {
                strategy,
                task,
                count: rs.len(),
                acc_mean,
                acc_std,
                frechet_mean,
                frechet_std,
                seconds_mean,
                seconds_std,
            }
        })
        .collect()
}

/// Runs every `(strategy, seed)` cell under `template.out/<strategy>/seed_<s>`
/// and writes `summary.csv` over the cells that succeeded. Failed cells are
/// logged, listed in `failures.txt` and skipped.
pub fn sweep(
    template: &RunConfig,
    seeds: &[u64],
    strategies: &[Strategy],
    force: bool,
    env_root: Option<&Path>,
) -> Result<SweepOutcome> {
    if seeds.is_empty() || strategies.is_empty() {
        return Err(Error::BadValue {
            key: if seeds.is_empty() {
                "seeds"
            } else {
                "strategies"
            }
            .into(),
            reason: "at least one is required".into(),
        });
    }
    template.validate()?;
    let root = template.out.clone();
    fs::create_dir_all(&root)?;
    let stream = load_stream(template, env_root)?;
    let evaluator = build_evaluator(&stream, template.samples_per_class)?;

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &strategy in strategies {
        for &seed in seeds {
            let cfg = RunConfig {
                strategy,
                seed,
                out: root.join(strategy.tag()).join(format!("seed_{seed}")),
                ..template.clone()
            };
            match run_with(&cfg, &stream, &evaluator, force) {
                Ok(outcome) => {
                    rows.extend(outcome.reports.iter().map(|r| row_of(&cfg, r)));
                    runs.push(outcome);
                }
                Err(e) => {
                    warn!("{strategy} seed {seed} failed: {e}");
                    failures.push((strategy, seed, e.to_string()));
                }
            }
        }
    }

    let summary = summarize(&rows);
    let mut csv = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(root.join("summary.csv"))?;
    csv.write_record(SUMMARY_HEADER.split(','))?;
    for row in &summary {
        csv.serialize(row)?;
    }
    csv.flush()?;
    let failure_path = root.join("failures.txt");
    if failures.is_empty() {
        if failure_path.exists() {
            fs::remove_file(&failure_path)?;
        }
    } else {
        let text: String = failures
            .iter()
            .map(|(s, seed, e)| format!("{s} seed {seed}: {e}\n"))
            .collect();
        fs::write(failure_path, text)?;
    }
    Ok(SweepOutcome {
        summary,
        runs,
        failures,
    })
}
