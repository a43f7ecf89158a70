//! Run configuration: flat `key = value` files, overridden by flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::Strategy;
use crate::cvae::Likelihood;
use crate::error::{Error, Result};
use crate::lifelong::FeedbackSign;

pub const DATA_ROOT_ENV: &str = "LIFEGEN_DATA";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Mnist,
    FashionMnist,
    Toy,
}

impl Dataset {
    pub fn tag(self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::FashionMnist => "fashion_mnist",
            Dataset::Toy => "toy",
        }
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mnist" => Ok(Dataset::Mnist),
            "fashion_mnist" => Ok(Dataset::FashionMnist),
            "toy" => Ok(Dataset::Toy),
            _ => Err(format!("unknown dataset `{s}` (mnist, fashion_mnist, toy)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Dataset,
    pub strategy: Strategy,
    pub epochs_per_task: usize,
    pub seed: u64,
    /// Training images kept per class (first N in file order).
    pub per_class_cap: Option<usize>,
    /// Number of tasks taken from the front of the stream.
    pub tasks: usize,
    pub latent_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_r: Option<f64>,
    pub lambda_f: Option<f64>,
    pub feedback_sign: FeedbackSign,
    pub likelihood: Likelihood,
    /// Generated images per learned class when scoring a checkpoint.
    pub samples_per_class: usize,
    /// Training images per toy task (the test split is derived from it).
    pub toy_samples: usize,
    pub out: PathBuf,
    pub data_root: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Mnist,
            strategy: Strategy::Lglvkr,
            epochs_per_task: 5,
            seed: 0,
            per_class_cap: None,
            tasks: 10,
            latent_dim: 32,
            batch_size: 64,
            learning_rate: 1e-3,
            lambda_r: None,
            lambda_f: None,
            feedback_sign: FeedbackSign::Minimize,
            likelihood: Likelihood::Bernoulli,
            samples_per_class: 1000,
            toy_samples: 200,
            out: PathBuf::from("runs/default"),
            data_root: None,
        }
    }
}

pub const KEYS: [&str; 17] = [
    "dataset",
    "strategy",
    "epochs",
    "seed",
    "per_class_cap",
    "tasks",
    "latent_dim",
    "batch_size",
    "learning_rate",
    "lambda_r",
    "lambda_f",
    "feedback_sign",
    "likelihood",
    "samples_per_class",
    "toy_samples",
    "out",
    "data_root",
];

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| bad(key, format!("`{value}`: {e}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

/// `key = value` lines; `#` starts a comment, blank lines are ignored.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line, format!("line {}: expected `key = value`", n + 1)))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = parse(key, value)?,
            "strategy" => {
                self.strategy = value
                    .parse()
                    .map_err(|_| bad(key, format!("unknown strategy `{value}`")))?
            }
            "epochs" | "epochs_per_task" => self.epochs_per_task = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "per_class_cap" => self.per_class_cap = optional(key, value)?,
            "tasks" => self.tasks = parse(key, value)?,
            "latent_dim" => self.latent_dim = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lambda_r" => self.lambda_r = optional(key, value)?,
            "lambda_f" => self.lambda_f = optional(key, value)?,
            "feedback_sign" => {
                self.feedback_sign = match value {
                    "minimize" => FeedbackSign::Minimize,
                    "literal_negative" => FeedbackSign::LiteralNegative,
                    _ => return Err(bad(key, format!("`{value}` (minimize, literal_negative)"))),
                }
            }
            "likelihood" => {
                self.likelihood = match value {
                    "bernoulli" => Likelihood::Bernoulli,
                    "gaussian" => Likelihood::Gaussian,
                    _ => return Err(bad(key, format!("`{value}` (bernoulli, gaussian)"))),
                }
            }
            "samples_per_class" => self.samples_per_class = parse(key, value)?,
            "toy_samples" => self.toy_samples = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "data_root" => self.data_root = optional(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies the file's pairs, then the flag pairs, then validates.
    pub fn from_sources(file: Option<&str>, flags: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(text) = file {
            for (k, v) in parse_pairs(text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in flags {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs_per_task),
            ("tasks", self.tasks),
            ("latent_dim", self.latent_dim),
            ("batch_size", self.batch_size),
            ("toy_samples", self.toy_samples),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(bad(key, "must be at least 1"));
            }
        }
        if self.per_class_cap == Some(0) {
            return Err(bad("per_class_cap", "must be at least 1"));
        }
        if self.tasks > crate::data::NUM_CLASSES {
            return Err(bad(
                "tasks",
                format!("at most {} tasks", crate::data::NUM_CLASSES),
            ));
        }
        if self.samples_per_class < 100 {
            return Err(bad("samples_per_class", "must be at least 100"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(bad("learning_rate", "must be positive and finite"));
        }
        for (key, v) in [("lambda_r", self.lambda_r), ("lambda_f", self.lambda_f)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad(key, "must be non-negative and finite"));
                }
            }
        }
        Ok(())
    }

    /// Directory holding the IDX files for real datasets: `data_root`, else
    /// `env_root` (the `LIFEGEN_DATA` value), joined with the dataset tag.
    pub fn dataset_dir(&self, env_root: Option<&Path>) -> Result<Option<PathBuf>> {
        if self.dataset == Dataset::Toy {
            return Ok(None);
        }
        let root = self
            .data_root
            .as_deref()
            .or(env_root)
            .ok_or(Error::MissingDataRoot)?;
        Ok(Some(root.join(self.dataset.tag())))
    }

    /// Every key in canonical form; parses back to the same config.
    pub fn resolved(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("dataset", self.dataset.tag().into());
        line("strategy", self.strategy.tag().into());
        line("epochs", self.epochs_per_task.to_string());
        line("seed", self.seed.to_string());
        line(
            "per_class_cap",
            opt(self.per_class_cap.map(|v| v.to_string())),
        );
        line("tasks", self.tasks.to_string());
        line("latent_dim", self.latent_dim.to_string());
        line("batch_size", self.batch_size.to_string());
        line("learning_rate", self.learning_rate.to_string());
        line("lambda_r", opt(self.lambda_r.map(|v| v.to_string())));
        line("lambda_f", opt(self.lambda_f.map(|v| v.to_string())));
        line(
            "feedback_sign",
            match self.feedback_sign {
                FeedbackSign::Minimize => "minimize",
                FeedbackSign::LiteralNegative => "literal_negative",
            }
            .into(),
        );
        line(
            "likelihood",
            match self.likelihood {
                Likelihood::Bernoulli => "bernoulli",
                Likelihood::Gaussian => "gaussian",
            }
            .into(),
        );
        line("samples_per_class", self.samples_per_class.to_string());
        line("toy_samples", self.toy_samples.to_string());
        line("out", self.out.display().to_string());
        line(
            "data_root",
            opt(self.data_root.as_ref().map(|p| p.display().to_string())),
        );
        s
    }

    /// Hex SHA-256 of the resolved text minus the output directory, so
    /// identical experiments hash equal wherever they are written.
    pub fn hash(&self) -> String {
        let text: String = self
            .resolved()
            .lines()
            .filter(|l| !l.starts_with("out ="))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
