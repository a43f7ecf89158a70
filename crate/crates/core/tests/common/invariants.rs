//! Frozen-snapshot and weight-schedule invariants on the toy stream.

use lifegen::autodiff::{gaussian, seeded_rng, Tape};
use lifegen::cvae::{CvaeConfig, Likelihood};
use lifegen::data::{toy_stream, TaskStream};
use lifegen::lifelong::*;

type Check = Result<(), String>;

pub fn small_cvae() -> CvaeConfig {
    CvaeConfig {
        latent_dim: 8,
        hidden_dim: 64,
        label_embed_dim: 8,
        ..CvaeConfig::default()
    }
}

pub fn quick(epochs: usize) -> LearnerConfig {
    LearnerConfig {
        epochs,
        batch_size: 32,
        ..LearnerConfig::default()
    }
}

pub fn stream(tasks: usize, n: usize) -> TaskStream {
    toy_stream(tasks, n, &mut seeded_rng(11)).unwrap()
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// A snapshot's digest does not move while later tasks train.
pub fn snapshot_digest_is_stable() -> Check {
    let s = stream(3, 64);
    let mut learner = Learner::new(small_cvae(), quick(2));
    let first = learner.train_first_task(&s.tasks()[0].train).map_err(err)?;
    let before = first.digest();
    learner
        .train_subsequent_task(&s.tasks()[1].train)
        .map_err(err)?;
    learner
        .train_subsequent_task(&s.tasks()[2].train)
        .map_err(err)?;
    ensure!(first.digest() == before, "snapshot digest changed");
    ensure!(
        learner.model().decoder.params().digest() != before,
        "live decoder never moved"
    );
    Ok(())
}

/// Every logged step uses λ_f = 1, λ_r = t − 1, and sums its terms.
pub fn weights_follow_schedule() -> Check {
    let s = stream(4, 40);
    let mut learner = Learner::new(small_cvae(), quick(1));
    for task in s.tasks() {
        learner.train_next(&task.train).map_err(err)?;
    }
    for t in 1..=4 {
        let steps: Vec<_> = learner.loss_log().iter().filter(|r| r.task == t).collect();
        ensure!(!steps.is_empty(), "no steps logged for task {t}");
        for r in steps {
            ensure!(r.lambda_f == 1.0, "task {t}: lambda_f {}", r.lambda_f);
            ensure!(
                r.lambda_r == (t - 1) as f64,
                "task {t}: lambda_r {}",
                r.lambda_r
            );
            ensure!(
                r.knowledge_reconstruction.is_some() == (t >= 2),
                "task {t}: reconstruction term presence"
            );
            let fc = r
                .feedback_consolidation
                .ok_or("missing consolidation term")?;
            let expected = r.reconstruction
                + r.kl
                + r.lambda_f * fc
                + r.lambda_r * r.knowledge_reconstruction.unwrap_or(0.0);
            ensure!(
                (expected - r.total).abs() < 1e-3 * expected.abs().max(1.0),
                "task {t}: total {} vs weighted sum {expected}",
                r.total
            );
        }
    }
    Ok(())
}

/// The snapshot term reaches the decoder but never the encoder.
pub fn reconstruction_skips_encoder() -> Check {
    let s = stream(1, 32);
    let mut learner = Learner::new(small_cvae(), quick(1));
    let snapshot = learner.train_first_task(&s.tasks()[0].train).map_err(err)?;
    // Move the live decoder off the snapshot so the gradient is non-zero.
    for id in learner.model().decoder.params().ids().collect::<Vec<_>>() {
        for v in learner
            .model_mut()
            .decoder
            .params_mut()
            .value_mut(id)
            .data_mut()
        {
            *v *= 1.05;
        }
    }
    let model = learner.model();
    let mut tape = Tape::new();
    let enc = model.encoder.bind(&mut tape, true);
    let dec = model.decoder.bind(&mut tape, true);
    let mut sampler = LabelSampler::new(snapshot.labels(), seeded_rng(2)).map_err(err)?;
    let loss = knowledge_reconstruction_loss(
        &mut tape,
        &dec,
        Some(&snapshot),
        Likelihood::Bernoulli,
        16,
        &mut sampler,
    )
    .map_err(err)?;
    let grads = tape.backward(loss).map_err(err)?;
    for &v in enc.bound().vars() {
        if let Some(g) = grads.get(v) {
            ensure!(g.iter().all(|&x| x == 0.0), "encoder received gradient");
        }
    }
    let dec_norm: f32 = dec
        .bound()
        .vars()
        .iter()
        .filter_map(|&v| grads.get(v))
        .flatten()
        .map(|g| g * g)
        .sum();
    ensure!(dec_norm > 0.0, "decoder received no gradient");
    Ok(())
}

/// Copying the snapshot into the live decoder reproduces its outputs bit
/// for bit; there the reconstruction loss is stationary and equals the
/// frozen outputs' mean Bernoulli entropy, and any perturbation raises it.
pub fn copy_initialisation_is_exact() -> Check {
    let s = stream(2, 48);
    let mut learner = Learner::new(small_cvae(), quick(1));
    let snapshot = learner.train_first_task(&s.tasks()[0].train).map_err(err)?;

    let z = gaussian(&[20, 8], &mut seeded_rng(5));
    let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
    let frozen = snapshot.decode(&z, &labels).map_err(err)?;
    let mut decoder = learner.model().decoder.clone();
    decoder
        .params_mut()
        .copy_values_from(snapshot.decoder().params())
        .map_err(err)?;
    let live = decoder.decode(&z, &labels).map_err(err)?;
    ensure!(
        frozen.data() == live.data(),
        "copied decoder differs from snapshot"
    );

    let mut tape = Tape::new();
    let dec = decoder.bind(&mut tape, true);
    let loss = knowledge_reconstruction_on(
        &mut tape,
        &dec,
        &snapshot,
        Likelihood::Bernoulli,
        z.clone(),
        &labels,
    )
    .map_err(err)?;
    let value = f64::from(tape.value(loss).item().map_err(err)?);
    let grads = tape.backward(loss).map_err(err)?;
    for &v in dec.bound().vars() {
        let g = grads.get(v).ok_or("missing decoder gradient")?;
        ensure!(g.iter().all(|&x| x == 0.0), "non-zero gradient at the copy");
    }
    let entropy: f64 = frozen
        .data()
        .iter()
        .map(|&p| {
            let p = f64::from(p).clamp(1e-7, 1.0 - 1e-7);
            -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / 20.0;
    ensure!(
        (value - entropy).abs() < 1e-4 * entropy,
        "loss {value} vs entropy {entropy}"
    );

    let id = decoder
        .params()
        .find("output.bias")
        .ok_or("no output.bias")?;
    decoder.params_mut().value_mut(id).data_mut()[100] += 0.1;
    let mut tape = Tape::new();
    let dec = decoder.bind(&mut tape, false);
    let loss = knowledge_reconstruction_on(
        &mut tape,
        &dec,
        &snapshot,
        Likelihood::Bernoulli,
        z,
        &labels,
    )
    .map_err(err)?;
    let perturbed = f64::from(tape.value(loss).item().map_err(err)?);
    ensure!(
        perturbed > value,
        "perturbation lowered the loss: {perturbed} vs {value}"
    );
    Ok(())
}

pub type Invariant = (&'static str, fn() -> Check);

pub const ALL: [Invariant; 4] = [
    ("snapshot digest stability", snapshot_digest_is_stable),
    ("weight schedule", weights_follow_schedule),
    (
        "zero encoder gradient from snapshot term",
        reconstruction_skips_encoder,
    ),
    ("copy-initialisation identity", copy_initialisation_is_exact),
];
