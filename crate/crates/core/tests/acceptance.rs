//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if
//! any fails.
//!
//! The MNIST criteria read IDX files from `$LIFEGEN_DATA/mnist`, falling
//! back to `<workspace>/data/mnist`. Run directories are kept under
//! `<workspace>/target/acceptance` for inspection.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{gradcheck, invariants, oracles};
use lifegen::baselines::Strategy;
use lifegen::config::{Dataset, RunConfig, DATA_ROOT_ENV};
use lifegen::data::TaskStream;
use lifegen::experiment::{self, read_metrics, MetricsRow, RunOutcome};
use lifegen::metrics::Evaluator;

const TRIALS: u64 = 100;
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];
const PER_CLASS_CAP: usize = 2000;
const MINUTE: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

struct Tally {
    failed: Vec<usize>,
}

impl Tally {
    fn record(
        &mut self,
        id: usize,
        name: &str,
        limit: Option<Duration>,
        check: impl FnOnce() -> Outcome,
    ) {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, limit) {
            if elapsed > limit {
                outcome = Err(format!(
                    "{detail}; took {:.0}s, limit {:.0}s",
                    elapsed.as_secs_f64(),
                    limit.as_secs_f64()
                ));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "{tag} {id:>2} {name}: {detail} [{:.1}s]",
            elapsed.as_secs_f64()
        );
        if outcome.is_err() {
            self.failed.push(id);
        }
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    for (name, check) in gradcheck::OPS {
        for trial in 0..TRIALS {
            let seed = trial.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xACCE;
            let e = check(seed);
            if !(e < gradcheck::TOLERANCE) {
                return Err(format!("{name} trial {trial}: relative error {e:.3e}"));
            }
            worst = worst.max(e);
        }
    }
    Ok(format!(
        "{} ops x {TRIALS} trials, worst relative error {worst:.2e}",
        gradcheck::OPS.len()
    ))
}

fn kl() -> Outcome {
    let mut worst = 0.0f64;
    for (case, (closed, estimate)) in oracles::kl_cases().into_iter().enumerate() {
        let gap = (closed - estimate).abs();
        if !(gap < oracles::KL_TOLERANCE) {
            return Err(format!(
                "case {case}: closed form {closed:.5} vs Monte Carlo {estimate:.5}"
            ));
        }
        worst = worst.max(gap);
    }
    Ok(format!("20 cases, worst gap {worst:.2e}"))
}

fn frechet() -> Outcome {
    let mut worst = 0.0f64;
    for trial in 0..TRIALS {
        let (got, expected) = oracles::frechet_diagonal_case(1000 + trial);
        let gap = (got - expected).abs();
        if !(gap < oracles::FRECHET_TOLERANCE) {
            return Err(format!("case {trial}: {got} vs closed form {expected}"));
        }
        worst = worst.max(gap);
        oracles::frechet_axioms(5000 + trial).map_err(|e| format!("case {trial}: {e}"))?;
    }
    Ok(format!(
        "{TRIALS} diagonal cases (worst gap {worst:.2e}) and {TRIALS} axiom cases"
    ))
}

fn lifelong_invariants() -> Outcome {
    for (name, check) in invariants::ALL {
        check().map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(invariants::ALL.map(|(n, _)| n).join(", "))
}

/// `(metrics.csv without the seconds column, checkpoint bytes)`.
fn run_fingerprint(dir: &Path) -> Result<(Vec<String>, Vec<Vec<u8>>), String> {
    let text = fs::read_to_string(dir.join("metrics.csv")).map_err(|e| e.to_string())?;
    let rows = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(5);
            f.join(",")
        })
        .collect();
    let mut ckpts = Vec::new();
    for t in 1.. {
        match fs::read(dir.join(format!("task_{t}.ckpt"))) {
            Ok(bytes) => ckpts.push(bytes),
            Err(_) => break,
        }
    }
    Ok((rows, ckpts))
}

fn determinism(root: &Path) -> Outcome {
    let mut prints = Vec::new();
    for name in ["a", "b"] {
        // Scoring size does not bear on determinism; the minimum keeps this quick.
        let cfg = RunConfig {
            dataset: Dataset::Toy,
            samples_per_class: 100,
            out: root.join(format!("toy_{name}")),
            ..RunConfig::default()
        };
        experiment::run(&cfg, true, None).map_err(|e| e.to_string())?;
        prints.push(run_fingerprint(&cfg.out)?);
    }
    let (rows, ckpts) = &prints[0];
    if ckpts.len() != 10 {
        return Err(format!("expected 10 checkpoints, found {}", ckpts.len()));
    }
    if prints[0].0 != prints[1].0 {
        return Err("metrics.csv numeric fields differ".into());
    }
    if prints[0].1 != prints[1].1 {
        return Err("checkpoints differ".into());
    }
    Ok(format!(
        "{} metric rows and {} checkpoints identical",
        rows.len() - 1,
        ckpts.len()
    ))
}

/// Runs on the shared MNIST stream, memoised by `(strategy, seed)`.
struct Mnist {
    template: RunConfig,
    stream: TaskStream,
    evaluator: Evaluator,
    runs: BTreeMap<(Strategy, u64), Result<Vec<MetricsRow>, String>>,
}

impl Mnist {
    fn load(root: &Path) -> Result<Self, String> {
        let data_root = std::env::var_os(DATA_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| workspace().join("data"));
        if !data_root.join("mnist").is_dir() {
            return Err(format!(
                "no MNIST IDX files under {}; set {DATA_ROOT_ENV} (see README)",
                data_root.join("mnist").display()
            ));
        }
        let template = RunConfig {
            dataset: Dataset::Mnist,
            per_class_cap: Some(PER_CLASS_CAP),
            data_root: Some(data_root),
            out: root.to_path_buf(),
            ..RunConfig::default()
        };
        let stream = experiment::load_stream(&template, None).map_err(|e| e.to_string())?;
        let evaluator = experiment::build_evaluator(&stream, template.samples_per_class)
            .map_err(|e| e.to_string())?;
        Ok(Mnist {
            template,
            stream,
            evaluator,
            runs: BTreeMap::new(),
        })
    }

    fn rows(&mut self, strategy: Strategy, seed: u64) -> Result<Vec<MetricsRow>, String> {
        if !self.runs.contains_key(&(strategy, seed)) {
            let cfg = RunConfig {
                strategy,
                seed,
                out: self
                    .template
                    .out
                    .join(strategy.tag())
                    .join(format!("seed_{seed}")),
                ..self.template.clone()
            };
            let start = Instant::now();
            let result = experiment::run_with(&cfg, &self.stream, &self.evaluator, true)
                .and_then(|o: RunOutcome| read_metrics(&o.dir.join("metrics.csv")))
                .map_err(|e| format!("{strategy} seed {seed}: {e}"));
            if let Ok(rows) = &result {
                let last = rows.last().expect("ten rows");
                println!(
                    "     {strategy} seed {seed}: final acc {:.2}, frechet {:.2}, training {:.0}s, total {:.0}s",
                    last.acc,
                    last.frechet,
                    training_seconds(rows),
                    start.elapsed().as_secs_f64()
                );
            }
            self.runs.insert((strategy, seed), result);
        }
        self.runs[&(strategy, seed)].clone()
    }

    fn final_acc(&mut self, strategy: Strategy, seed: u64) -> Result<f64, String> {
        Ok(self.rows(strategy, seed)?.last().ok_or("no rows")?.acc)
    }

    fn mean_final_acc(&mut self, strategy: Strategy) -> Result<f64, String> {
        let mut total = 0.0;
        for seed in ABLATION_SEEDS {
            total += self.final_acc(strategy, seed)?;
        }
        Ok(total / ABLATION_SEEDS.len() as f64)
    }
}

fn training_seconds(rows: &[MetricsRow]) -> f64 {
    rows.iter().map(|r| r.seconds).sum()
}

fn trajectory(rows: &[MetricsRow]) -> String {
    rows.iter()
        .map(|r| format!("{:.1}", r.acc))
        .collect::<Vec<_>>()
        .join(" ")
}

fn forgetting(m: &mut Mnist) -> Outcome {
    let rows = m.rows(Strategy::FineTune, 0)?;
    let last = rows.last().ok_or("no rows")?.acc;
    let rises: Vec<String> = rows
        .windows(2)
        .filter(|w| w[0].task >= 3 && w[1].acc > w[0].acc + 5.0)
        .map(|w| {
            format!(
                "task {} -> {}: {:.2} -> {:.2}",
                w[0].task, w[1].task, w[0].acc, w[1].acc
            )
        })
        .collect();
    let detail = format!(
        "final acc {last:.2} (< 55); acc by task {}",
        trajectory(&rows)
    );
    if last >= 55.0 {
        return Err(detail);
    }
    if !rises.is_empty() {
        return Err(format!(
            "{detail}; rises beyond 5 points: {}",
            rises.join(", ")
        ));
    }
    Ok(detail)
}

fn retention(m: &mut Mnist) -> Outcome {
    let lgl = m.final_acc(Strategy::Lglvkr, 0)?;
    let joint = m.final_acc(Strategy::Joint, 0)?;
    let detail = format!(
        "lglvkr {lgl:.2} (>= 75), joint {joint:.2}, gap {:.2} (<= 6)",
        joint - lgl
    );
    if lgl >= 75.0 && joint - lgl <= 6.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ablation(m: &mut Mnist) -> Outcome {
    let lgl = m.mean_final_acc(Strategy::Lglvkr)?;
    let no_fc = m.mean_final_acc(Strategy::LglNoFc)?;
    let no_kr = m.mean_final_acc(Strategy::LglNoKr)?;
    let detail = format!(
        "3-seed means: lglvkr {lgl:.2} vs lgl_no_fc - 2 = {:.2}; lgl_no_kr {no_kr:.2} (< 60); lgl_no_fc {no_fc:.2} (>= 75)",
        no_fc - 2.0
    );
    if lgl >= no_fc - 2.0 && no_kr < 60.0 && no_fc >= 75.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn error_accumulation(m: &mut Mnist) -> Outcome {
    let replay = m
        .rows(Strategy::PseudoRehearsalCvae, 0)?
        .last()
        .ok_or("no rows")?
        .frechet;
    let lgl = m
        .rows(Strategy::Lglvkr, 0)?
        .last()
        .ok_or("no rows")?
        .frechet;
    let detail = format!("pseudo_rehearsal_cvae {replay:.3} vs lglvkr {lgl:.3}");
    if replay > lgl {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn efficiency(m: &mut Mnist) -> Outcome {
    let lgl = training_seconds(&m.rows(Strategy::Lglvkr, 0)?);
    let replay = training_seconds(&m.rows(Strategy::PseudoRehearsalCvae, 0)?);
    let detail =
        format!("training wall clock lglvkr {lgl:.1}s vs pseudo_rehearsal_cvae {replay:.1}s");
    if lgl <= replay {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let root = workspace().join("target/acceptance");
    let mut tally = Tally { failed: Vec::new() };

    tally.record(1, "gradient finite differences", Some(MINUTE), gradients);
    tally.record(2, "KL closed form vs Monte Carlo", Some(MINUTE), kl);
    tally.record(
        3,
        "Frechet diagonal oracle and axioms",
        Some(MINUTE),
        frechet,
    );
    tally.record(
        9,
        "snapshot and weight-schedule invariants",
        Some(MINUTE),
        lifelong_invariants,
    );
    tally.record(10, "toy-stream determinism", None, || determinism(&root));

    let mnist_start = Instant::now();
    match Mnist::load(&root.join("mnist")) {
        Ok(mut m) => {
            println!(
                "     MNIST stream and reference extractor ready [{:.1}s]",
                mnist_start.elapsed().as_secs_f64()
            );
            tally.record(4, "fine_tune forgets", Some(30 * MINUTE), || {
                forgetting(&mut m)
            });
            tally.record(5, "lglvkr retention vs joint", Some(60 * MINUTE), || {
                retention(&mut m)
            });
            tally.record(6, "ablation ordering over 3 seeds", None, || {
                ablation(&mut m)
            });
            tally.record(7, "pseudo-rehearsal error accumulation", None, || {
                error_accumulation(&mut m)
            });
            tally.record(
                8,
                "lglvkr trains no slower than pseudo-rehearsal",
                None,
                || efficiency(&mut m),
            );
        }
        Err(e) => {
            for (id, name) in [
                (4, "fine_tune forgets"),
                (5, "lglvkr retention vs joint"),
                (6, "ablation ordering over 3 seeds"),
                (7, "pseudo-rehearsal error accumulation"),
                (8, "lglvkr trains no slower than pseudo-rehearsal"),
            ] {
                tally.record(id, name, None, || Err(e.clone()));
            }
        }
    }

    if tally.failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        tally.failed.sort_unstable();
        println!("acceptance: failing criteria {:?}", tally.failed);
        ExitCode::FAILURE
    }
}
