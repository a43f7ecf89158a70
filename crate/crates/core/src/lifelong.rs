//! Lifelong training over a class-incremental task stream.
//!
//! After each task the decoder is frozen into a [`DecoderSnapshot`]. The next
//! task starts its decoder from that snapshot and adds two terms to the CVAE
//! objective:
//!
//! * knowledge reconstruction: the current decoder must reproduce the frozen
//!   decoder's output on prior samples `z ~ N(0, I)` with labels drawn
//!   uniformly from the classes learned so far, weighted by `t − 1`;
//! * feedback consolidation: the model's own reconstruction is encoded a
//!   second time and that posterior is pulled toward the prior, weight 1.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gaussian, stream_rng, Adam, AdamConfig, SeededRng, Tape, Tensor, Var};
use crate::cvae::{
    cvae_loss, kl_to_prior, one_hot, read_checkpoint, write_checkpoint, CvaeConfig, CvaeModel,
    Decoder, DecoderOnTape, EncoderOnTape, Likelihood,
};
use crate::data::{LabeledDataset, Task, TaskStream};
use crate::error::{Error, Result};

// Generator streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_PSEUDO: u64 = 3;

// ── snapshot ───────────────────────────────────────────────────────────

/// Frozen decoder `θ_{t−1}` plus every label learned up to that task.
#[derive(Clone, Debug)]
pub struct DecoderSnapshot {
    decoder: Decoder,
    labels: Vec<usize>,
    task: usize,
}

impl DecoderSnapshot {
    pub fn new(decoder: &Decoder, labels: &[usize], task: usize) -> Result<Self> {
        let labels: Vec<usize> = labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if labels.is_empty() {
            return Err(Error::EmptyDataset("snapshot label set".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= decoder.num_classes()) {
            return Err(Error::UnknownLabel {
                label: bad,
                classes: decoder.num_classes(),
            });
        }
        let mut decoder = decoder.clone();
        decoder.params_mut().clear_grads();
        Ok(Self {
            decoder,
            labels,
            task,
        })
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn task(&self) -> usize {
        self.task
    }

    /// SHA-256 over parameter names, shapes and values.
    pub fn digest(&self) -> [u8; 32] {
        self.decoder.params().digest()
    }

    /// Frozen forward pass; never touches a tape.
    pub fn decode(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
        self.decoder.decode(z, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write_checkpoint(&mut out, self.decoder.params(), &self.labels)?;
        std::io::Write::flush(&mut out)?;
        Ok(())
    }

    pub fn load(path: &Path, task: usize) -> Result<Self> {
        let ck = read_checkpoint(&mut BufReader::new(File::open(path)?))?;
        let decoder = Decoder::from_params(ck.params)?;
        Self::new(&decoder, &ck.labels, task)
    }
}

// ── weights and label sampling ─────────────────────────────────────────

/// Coefficients of the two lifelong terms at task `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_f: f64,
    pub task: usize,
}

impl LossWeights {
    /// `λ_r = t − 1`, `λ_f = 1`.
    pub fn schedule(task: usize) -> Self {
        assert!(task >= 1, "tasks are numbered from 1");
        Self {
            lambda_r: (task - 1) as f64,
            lambda_f: 1.0,
            task,
        }
    }
}

/// Optional fixed replacements for the scheduled weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightOverrides {
    /// Used for every `t ≥ 2`; the first task never has a reconstruction term.
    pub lambda_r: Option<f64>,
    pub lambda_f: Option<f64>,
}

impl WeightOverrides {
    pub fn weights(&self, task: usize) -> LossWeights {
        let mut w = LossWeights::schedule(task);
        if let (Some(r), true) = (self.lambda_r, task >= 2) {
            w.lambda_r = r;
        }
        if let Some(f) = self.lambda_f {
            w.lambda_f = f;
        }
        w
    }
}

/// Uniform draws from a fixed label set.
#[derive(Clone, Debug)]
pub struct LabelSampler {
    labels: Vec<usize>,
    rng: SeededRng,
}

impl LabelSampler {
    pub fn new(labels: &[usize], rng: SeededRng) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset("label sampler".into()));
        }
        Ok(Self {
            labels: labels.to_vec(),
            rng,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn draw(&mut self, n: usize) -> Vec<usize> {
        (0..n)
            .map(|_| self.labels[self.rng.gen_range(0..self.labels.len())])
            .collect()
    }

    /// Standard-normal latent codes from the same generator.
    pub fn latent(&mut self, n: usize, latent_dim: usize) -> Tensor {
        gaussian(&[n, latent_dim], &mut self.rng)
    }
}

// ── loss terms ─────────────────────────────────────────────────────────

/// Direction of the consolidation term. `Minimize` pulls re-encoded
/// reconstructions toward the prior; `LiteralNegative` keeps the printed
/// minus sign and pushes them away.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackSign {
    #[default]
    Minimize,
    LiteralNegative,
}

/// Knowledge reconstruction on explicit pseudo-pairs `(z, labels)`: the
/// frozen decoder's mean output is a constant target for the current
/// decoder under `likelihood`. Only the current decoder receives gradient.
pub fn knowledge_reconstruction_on(
    tape: &mut Tape,
    current: &DecoderOnTape<'_>,
    snapshot: &DecoderSnapshot,
    likelihood: Likelihood,
    z: Tensor,
    labels: &[usize],
) -> Result<Var> {
    let target = snapshot.decode(&z, labels)?;
    let target = tape.constant(target);
    let y = tape.constant(one_hot(labels, snapshot.decoder().num_classes())?);
    let z = tape.constant(z);
    let prediction = current.decode(tape, z, y)?;
    likelihood.loss(tape, prediction, target)
}

/// Knowledge reconstruction on `batch_size` fresh pseudo-pairs.
pub fn knowledge_reconstruction_loss(
    tape: &mut Tape,
    current: &DecoderOnTape<'_>,
    snapshot: Option<&DecoderSnapshot>,
    likelihood: Likelihood,
    batch_size: usize,
    sampler: &mut LabelSampler,
) -> Result<Var> {
    let snapshot = snapshot.ok_or(Error::NoSnapshot)?;
    let z = sampler.latent(batch_size, snapshot.decoder().latent_dim());
    let labels = sampler.draw(batch_size);
    knowledge_reconstruction_on(tape, current, snapshot, likelihood, z, &labels)
}

/// Encodes the reconstruction `x̂` a second time and returns the KL of that
/// posterior to the prior (negated under [`FeedbackSign::LiteralNegative`]).
pub fn feedback_consolidation_loss(
    tape: &mut Tape,
    encoder: &EncoderOnTape<'_>,
    reconstruction: Var,
    y: Var,
    sign: FeedbackSign,
) -> Result<Var> {
    let latent = encoder.encode(tape, reconstruction, y)?;
    let kl = kl_to_prior(tape, latent)?;
    Ok(match sign {
        FeedbackSign::Minimize => kl,
        FeedbackSign::LiteralNegative => tape.scale(kl, -1.0)?,
    })
}

// ── trainer ────────────────────────────────────────────────────────────

/// Which optional terms enter the objective (the CVAE loss always does).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveTerms {
    pub knowledge_reconstruction: bool,
    pub feedback_consolidation: bool,
}

impl ActiveTerms {
    pub const ALL: Self = Self {
        knowledge_reconstruction: true,
        feedback_consolidation: true,
    };
    pub const NONE: Self = Self {
        knowledge_reconstruction: false,
        feedback_consolidation: false,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub likelihood: Likelihood,
    pub terms: ActiveTerms,
    pub feedback_sign: FeedbackSign,
    pub overrides: WeightOverrides,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            adam: AdamConfig::default(),
            likelihood: Likelihood::Bernoulli,
            terms: ActiveTerms::ALL,
            feedback_sign: FeedbackSign::Minimize,
            overrides: WeightOverrides::default(),
            seed: 0,
        }
    }
}

/// Per-step loss values; optional terms are `None` when not evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub task: usize,
    pub epoch: usize,
    pub reconstruction: f64,
    pub kl: f64,
    pub knowledge_reconstruction: Option<f64>,
    pub feedback_consolidation: Option<f64>,
    pub lambda_r: f64,
    pub lambda_f: f64,
    pub total: f64,
}

/// CVAE plus the state carried between tasks.
#[derive(Debug)]
pub struct Learner {
    model: CvaeModel,
    config: LearnerConfig,
    snapshot: Option<DecoderSnapshot>,
    task: usize,
    log: Vec<StepRecord>,
    shuffle_rng: SeededRng,
    noise_rng: SeededRng,
}

impl Learner {
    pub fn new(cvae: CvaeConfig, config: LearnerConfig) -> Self {
        let model = CvaeModel::new(cvae, &mut stream_rng(config.seed, STREAM_INIT));
        Self {
            model,
            shuffle_rng: stream_rng(config.seed, STREAM_SHUFFLE),
            noise_rng: stream_rng(config.seed, STREAM_NOISE),
            config,
            snapshot: None,
            task: 0,
            log: Vec::new(),
        }
    }

    pub fn model(&self) -> &CvaeModel {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut CvaeModel {
        &mut self.model
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Option<&DecoderSnapshot> {
        self.snapshot.as_ref()
    }

    /// Number of tasks completed.
    pub fn tasks_done(&self) -> usize {
        self.task
    }

    pub fn loss_log(&self) -> &[StepRecord] {
        &self.log
    }

    pub fn weights(&self, task: usize) -> LossWeights {
        self.config.overrides.weights(task)
    }

    /// First task: CVAE loss plus (if active) the consolidation term.
    pub fn train_first_task(&mut self, data: &LabeledDataset) -> Result<DecoderSnapshot> {
        if self.task != 0 {
            return Err(Error::ShapeMismatch(format!(
                "first task requested after {} tasks",
                self.task
            )));
        }
        self.fit(data, 1, None)?;
        self.finish_task(&data.classes())
    }

    /// Task `t ≥ 2`: the decoder restarts from the snapshot, which stays
    /// frozen as the reconstruction target.
    pub fn train_subsequent_task(&mut self, data: &LabeledDataset) -> Result<DecoderSnapshot> {
        let snapshot = self.snapshot.clone().ok_or(Error::NoSnapshot)?;
        let classes = data.classes();
        if let Some(&c) = classes.iter().find(|c| snapshot.labels().contains(c)) {
            return Err(Error::LabelOverlap(c));
        }
        self.model
            .decoder
            .params_mut()
            .copy_values_from(snapshot.decoder().params())?;
        let t = self.task + 1;
        self.fit(data, t, Some(&snapshot))?;
        let mut labels = snapshot.labels().to_vec();
        labels.extend(classes);
        self.finish_task(&labels)
    }

    pub fn train_next(&mut self, data: &LabeledDataset) -> Result<DecoderSnapshot> {
        if self.task == 0 {
            self.train_first_task(data)
        } else {
            self.train_subsequent_task(data)
        }
    }

    /// Trains on `data` for the configured epochs as task `task`, with the
    /// reconstruction term drawn against `snapshot` when both are active.
    pub fn fit(
        &mut self,
        data: &LabeledDataset,
        task: usize,
        snapshot: Option<&DecoderSnapshot>,
    ) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset(data.name().to_string()));
        }
        let weights = self.weights(task);
        let kr_snapshot =
            snapshot.filter(|_| self.config.terms.knowledge_reconstruction && task >= 2);
        let mut sampler = match kr_snapshot {
            Some(s) => Some(LabelSampler::new(
                s.labels(),
                stream_rng(self.config.seed, STREAM_PSEUDO + 1000 * task as u64),
            )?),
            None => None,
        };
        let mut enc_opt = Adam::new(self.config.adam, self.model.encoder.params());
        let mut dec_opt = Adam::new(self.config.adam, self.model.decoder.params());
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut self.shuffle_rng);
            let mut sum = 0.0;
            let mut steps = 0usize;
            for batch in order.chunks(self.config.batch_size) {
                let record =
                    self.step(data, batch, weights, epoch, kr_snapshot, sampler.as_mut())?;
                enc_opt.step(self.model.encoder.params_mut())?;
                dec_opt.step(self.model.decoder.params_mut())?;
                sum += record.total;
                steps += 1;
                self.log.push(record);
            }
            debug!(
                "task {task} epoch {epoch}: mean loss {:.4}",
                sum / steps as f64
            );
        }
        Ok(())
    }

    fn step(
        &mut self,
        data: &LabeledDataset,
        batch: &[usize],
        weights: LossWeights,
        epoch: usize,
        snapshot: Option<&DecoderSnapshot>,
        sampler: Option<&mut LabelSampler>,
    ) -> Result<StepRecord> {
        let cfg = self.config.clone();
        let (x, labels) = data.batch(batch)?;
        let eps = gaussian(
            &[batch.len(), self.model.config().latent_dim],
            &mut self.noise_rng,
        );
        let num_classes = self.model.config().num_classes;

        let mut tape = Tape::new();
        let enc = self.model.encoder.bind(&mut tape, true);
        let dec = self.model.decoder.bind(&mut tape, true);
        let xv = tape.constant(x);
        let yv = tape.constant(one_hot(&labels, num_classes)?);
        let ev = tape.constant(eps);
        let parts = cvae_loss(&mut tape, &enc, &dec, cfg.likelihood, xv, yv, ev)?;
        let mut total = parts.total;

        let mut fc_value = None;
        if cfg.terms.feedback_consolidation {
            let fc = feedback_consolidation_loss(
                &mut tape,
                &enc,
                parts.reconstruction_image,
                yv,
                cfg.feedback_sign,
            )?;
            fc_value = Some(fc);
            let weighted = tape.scale(fc, weights.lambda_f as f32)?;
            total = tape.add(total, weighted)?;
        }
        let mut kr_value = None;
        if let (Some(snapshot), Some(sampler)) = (snapshot, sampler) {
            let kr = knowledge_reconstruction_loss(
                &mut tape,
                &dec,
                Some(snapshot),
                cfg.likelihood,
                batch.len(),
                sampler,
            )?;
            kr_value = Some(kr);
            let weighted = tape.scale(kr, weights.lambda_r as f32)?;
            total = tape.add(total, weighted)?;
        }

        let read = |tape: &Tape, v: Var| -> Result<f64> { Ok(f64::from(tape.value(v).item()?)) };
        let record = StepRecord {
            task: weights.task,
            epoch,
            reconstruction: read(&tape, parts.reconstruction)?,
            kl: read(&tape, parts.variational)?,
            knowledge_reconstruction: kr_value.map(|v| read(&tape, v)).transpose()?,
            feedback_consolidation: fc_value.map(|v| read(&tape, v)).transpose()?,
            lambda_r: weights.lambda_r,
            lambda_f: weights.lambda_f,
            total: read(&tape, total)?,
        };
        let (enc_bound, dec_bound) = (enc.bound().clone(), dec.bound().clone());
        let grads = tape.backward(total)?;
        self.model
            .encoder
            .params_mut()
            .accumulate(&enc_bound, &grads);
        self.model
            .decoder
            .params_mut()
            .accumulate(&dec_bound, &grads);
        Ok(record)
    }

    /// Freezes the current decoder with `labels` as the completed task.
    pub fn finish_task(&mut self, labels: &[usize]) -> Result<DecoderSnapshot> {
        self.task += 1;
        let snapshot = DecoderSnapshot::new(&self.model.decoder, labels, self.task)?;
        self.snapshot = Some(snapshot.clone());
        Ok(snapshot)
    }
}

// ── driver ─────────────────────────────────────────────────────────────

/// What the driver hands to its observer after each task.
#[derive(Clone, Debug)]
pub struct TaskResult {
    pub task: usize,
    pub snapshot: DecoderSnapshot,
    /// Training wall-clock only.
    pub train_seconds: f64,
    /// Loss values of every step taken during this task.
    pub steps: Vec<StepRecord>,
}

/// Runs every task in order, calling `observe` after each (checkpointing,
/// metrics). The observer's values are collected in task order.
pub fn run_lifelong<T>(
    stream: &TaskStream,
    cvae: CvaeConfig,
    config: LearnerConfig,
    mut observe: impl FnMut(&TaskResult, &Task) -> Result<T>,
) -> Result<(DecoderSnapshot, Vec<T>)> {
    if stream.is_empty() {
        return Err(Error::EmptyDataset("task stream".into()));
    }
    let mut learner = Learner::new(cvae, config);
    let mut outputs = Vec::with_capacity(stream.len());
    let mut last = None;
    for task in stream.tasks() {
        let start = Instant::now();
        let logged = learner.loss_log().len();
        let snapshot = learner.train_next(&task.train)?;
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
