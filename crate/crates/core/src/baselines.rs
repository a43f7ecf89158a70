//! Comparison strategies sharing the lifelong trainer.
//!
//! | strategy                | model conditioning | reconstruction | consolidation | data per task        |
//! |-------------------------|--------------------|----------------|---------------|----------------------|
//! | `lglvkr`                | encoder + decoder  | yes            | yes           | current task         |
//! | `lgl_no_fc`             | encoder + decoder  | yes            | no            | current task         |
//! | `lgl_no_kr`             | encoder + decoder  | no             | yes           | current task         |
//! | `fine_tune`             | encoder + decoder  | no             | yes           | current task         |
//! | `joint`                 | encoder + decoder  | no             | yes           | all real data so far |
//! | `pseudo_rehearsal_cvae` | decoder only       | no             | no            | current + replay     |
//!
//! `fine_tune` and `lgl_no_kr` therefore train identically; they are kept
//! as separate tags because they answer different questions.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{stream_rng, SeededRng};
use crate::cvae::{Conditioning, CvaeConfig};
use crate::data::{LabeledDataset, Task, TaskStream};
use crate::error::{Error, Result};
use crate::lifelong::{ActiveTerms, DecoderSnapshot, Learner, LearnerConfig, TaskResult};
use crate::metrics::generate_dataset;

const STREAM_REPLAY: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FineTune,
    Joint,
    PseudoRehearsalCvae,
    LglNoKr,
    LglNoFc,
    Lglvkr,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::FineTune,
        Strategy::Joint,
        Strategy::PseudoRehearsalCvae,
        Strategy::LglNoKr,
        Strategy::LglNoFc,
        Strategy::Lglvkr,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::FineTune => "fine_tune",
            Strategy::Joint => "joint",
            Strategy::PseudoRehearsalCvae => "pseudo_rehearsal_cvae",
            Strategy::LglNoKr => "lgl_no_kr",
            Strategy::LglNoFc => "lgl_no_fc",
            Strategy::Lglvkr => "lglvkr",
        }
    }

    pub fn active_terms(self) -> ActiveTerms {
        match self {
            Strategy::Lglvkr => ActiveTerms::ALL,
            Strategy::LglNoFc => ActiveTerms {
                knowledge_reconstruction: true,
                feedback_consolidation: false,
            },
            Strategy::LglNoKr | Strategy::FineTune | Strategy::Joint => ActiveTerms {
                knowledge_reconstruction: false,
                feedback_consolidation: true,
            },
            Strategy::PseudoRehearsalCvae => ActiveTerms::NONE,
        }
    }

    pub fn conditioning(self) -> Conditioning {
        match self {
            Strategy::PseudoRehearsalCvae => Conditioning::DecoderOnly,
            _ => Conditioning::EncoderAndDecoder,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.tag() == s)
            .ok_or_else(|| Error::BadValue {
                key: "strategy".into(),
                reason: format!("unknown strategy `{s}`"),
            })
    }
}

/// Number of replayed samples at task `t` when the new task has `n_t`
/// samples: `(t − 1)·n_t`, i.e. a replay fraction of `(t − 1)/t`.
pub fn replay_count(task: usize, n_t: usize) -> usize {
    task.saturating_sub(1) * n_t
}

/// Class-balanced pseudo-samples of every label in `snapshot`, `per_class`
/// each, decoded from prior draws.
pub fn replay_set(
    snapshot: &DecoderSnapshot,
    per_class: usize,
    rng: &mut SeededRng,
) -> Result<LabeledDataset> {
    let mut set = generate_dataset(snapshot.decoder(), snapshot.labels(), per_class, rng)?;
    set.rename("replay");
    Ok(set)
}

/// Runs `strategy` over `stream`. The strategy fixes the active loss terms
/// and the conditioning layout; everything else comes from `cvae`/`config`.
pub fn run_strategy<T>(
    strategy: Strategy,
    stream: &TaskStream,
    cvae: CvaeConfig,
    config: LearnerConfig,
    mut observe: impl FnMut(&TaskResult, &Task) -> Result<T>,
) -> Result<(DecoderSnapshot, Vec<T>)> {
    if stream.is_empty() {
        return Err(Error::EmptyDataset("task stream".into()));
    }
    let cvae = CvaeConfig {
        conditioning: strategy.conditioning(),
        ..cvae
    };
    let config = LearnerConfig {
        terms: strategy.active_terms(),
        ..config
    };
    let seed = config.seed;
    let mut learner = Learner::new(cvae, config.clone());
    let mut outputs = Vec::with_capacity(stream.len());
    let mut last = None;
    for (i, task) in stream.tasks().iter().enumerate() {
        let t = i + 1;
        let start = Instant::now();
        let mut logged = learner.loss_log().len();
        let snapshot = match strategy {
            Strategy::Joint => {
                learner = Learner::new(cvae, config.clone());
                logged = 0;
                let union = stream.train_union(t)?;
                learner.fit(&union, 1, None)?;
                learner.finish_task(&union.classes())?
            }
            Strategy::PseudoRehearsalCvae if t >= 2 => {
                let previous = learner.snapshot().cloned().ok_or(Error::NoSnapshot)?;
                let n_t = task.train.len();
                let per_class = replay_count(t, n_t) / previous.labels().len();
                let mut rng = stream_rng(seed, STREAM_REPLAY + 1000 * t as u64);
                let replay = replay_set(&previous, per_class, &mut rng)?;
                let mixed = LabeledDataset::concat("current+replay", &[&task.train, &replay])?;
                learner.fit(&mixed, t, None)?;
                let mut labels = previous.labels().to_vec();
                labels.extend(task.train.classes());
                learner.finish_task(&labels)?
            }
            _ => learner.train_next(&task.train)?,
        };
        let result = TaskResult {
            task: task.index,
            snapshot,
            train_seconds: start.elapsed().as_secs_f64(),
            steps: learner.loss_log()[logged..].to_vec(),
        };
        outputs.push(observe(&result, task)?);
        last = Some(result.snapshot);
    }
    Ok((last.expect("stream is non-empty"), outputs))
}
