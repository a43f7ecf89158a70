use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::error;

use lifegen::baselines::Strategy;
use lifegen::config::{RunConfig, DATA_ROOT_ENV};
use lifegen::experiment;

#[derive(Parser)]
#[command(
    name = "lifegen",
    version,
    about = "Lifelong conditional-VAE generative learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one strategy over the task stream and score every task.
    Run(RunArgs),
    /// Run every (strategy, seed) pair and aggregate into summary.csv.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    /// Comma-separated strategy tags.
    #[arg(long, value_delimiter = ',', required = true)]
    strategies: Vec<String>,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist, fashion_mnist or toy.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    per_class_cap: Option<String>,
    #[arg(long)]
    latent_dim: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    lambda_r: Option<String>,
    #[arg(long)]
    lambda_f: Option<String>,
    /// minimize (default) or literal_negative.
    #[arg(long)]
    feedback_sign: Option<String>,
    /// bernoulli (default) or gaussian.
    #[arg(long)]
    likelihood: Option<String>,
    #[arg(long)]
    samples_per_class: Option<String>,
    #[arg(long)]
    toy_samples: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory holding `<dataset>/` IDX folders; defaults to $LIFEGEN_DATA.
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    force: bool,
}

impl CommonArgs {
    fn pairs(&self) -> Vec<(String, String)> {
        let text = [
            ("dataset", &self.dataset),
            ("epochs", &self.epochs),
            ("tasks", &self.tasks),
            ("per_class_cap", &self.per_class_cap),
            ("latent_dim", &self.latent_dim),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("lambda_r", &self.lambda_r),
            ("lambda_f", &self.lambda_f),
            ("feedback_sign", &self.feedback_sign),
            ("likelihood", &self.likelihood),
            ("samples_per_class", &self.samples_per_class),
            ("toy_samples", &self.toy_samples),
        ];
        let paths = [("out", &self.out), ("data_root", &self.data_root)];
        text.into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .chain(
                paths.into_iter().filter_map(|(k, v)| {
                    v.as_ref().map(|p| (k.to_string(), p.display().to_string()))
                }),
            )
            .collect()
    }

    fn resolve(&self, extra: Vec<(String, String)>) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(path) => Some(
                std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?,
            ),
            None => None,
        };
        let mut pairs = self.pairs();
        pairs.extend(extra);
        Ok(RunConfig::from_sources(file.as_deref(), &pairs)?)
    }
}

fn env_root() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let env = env_root();
    match cli.command {
        Command::Run(args) => {
            let mut extra = Vec::new();
            if let Some(s) = &args.strategy {
                extra.push(("strategy".to_string(), s.clone()));
            }
            if let Some(seed) = args.seed {
                extra.push(("seed".to_string(), seed.to_string()));
            }
            let cfg = args.common.resolve(extra)?;
            let outcome = experiment::run(&cfg, args.common.force, env.as_deref())?;
            let last = outcome.final_report();
            println!(
                "{}: {} tasks, final acc {:.2}%, frechet {:.4}, training {:.1}s -> {}",
                cfg.strategy,
                outcome.reports.len(),
                last.acc_percent,
                last.frechet,
                outcome.total_train_seconds(),
                outcome.dir.display()
            );
        }
        Command::Sweep(args) => {
            let cfg = args.common.resolve(Vec::new())?;
            let strategies = args
                .strategies
                .iter()
                .map(|s| s.parse::<Strategy>())
                .collect::<Result<Vec<_>, _>>()?;
            let outcome = experiment::sweep(
                &cfg,
                &args.seeds,
                &strategies,
                args.common.force,
                env.as_deref(),
            )?;
            for row in &outcome.summary {
                println!(
                    "{} task {}: acc {:.2} ± {:.2}, frechet {:.4} ± {:.4} (n = {})",
                    row.strategy,
                    row.task,
                    row.acc_mean,
                    row.acc_std,
                    row.frechet_mean,
                    row.frechet_std,
                    row.count
                );
            }
            if !outcome.failures.is_empty() {
                bail!(
                    "{} of {} runs failed",
                    outcome.failures.len(),
                    args.seeds.len() * strategies.len()
                );
            }
        }
    }
    Ok(())
}
