//! Conditional VAE whose encoder and decoder both consume the class label.
//!
//! Encoder: image `1024→256` and label `C→32` paths (leaky-ReLU 0.2), fused
//! `288→(μ, log σ²)`. Decoder: latent `d_z→256` and label `C→32` paths, fused
//! `288→256→1024` with a sigmoid head. The pseudo-rehearsal baseline drops the
//! encoder label path and feeds the raw one-hot into its decoder.

mod checkpoint;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gaussian, Bound, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Linear, LEAKY_GAIN};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_DIM: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const LEAK: f32 = 0.2;
/// `log σ²` is clamped to `[-LOGVAR_LIMIT, LOGVAR_LIMIT]`.
pub const LOGVAR_LIMIT: f32 = 10.0;

/// Where the class label enters the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    EncoderAndDecoder,
    /// Baseline CVAE: no encoder label input, raw one-hot into the decoder.
    DecoderOnly,
}

/// Form of `log p(x | y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Pixel-wise binary cross-entropy.
    Bernoulli,
    /// Pixel-wise squared error.
    Gaussian,
}

impl Likelihood {
    pub fn loss(self, tape: &mut Tape, prediction: Var, target: Var) -> Result<Var> {
        Ok(match self {
            Likelihood::Bernoulli => tape.bce(prediction, target)?,
            Likelihood::Gaussian => tape.mse(prediction, target)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub label_embed_dim: usize,
    pub num_classes: usize,
    pub image_dim: usize,
    pub conditioning: Conditioning,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden_dim: 256,
            label_embed_dim: 32,
            num_classes: 10,
            image_dim: IMAGE_DIM,
            conditioning: Conditioning::EncoderAndDecoder,
        }
    }
}

/// A validated class id with its one-hot width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelCode {
    class_id: usize,
    width: usize,
}

impl LabelCode {
    pub fn new(class_id: usize, width: usize) -> Result<Self> {
        if class_id >= width {
            return Err(Error::UnknownLabel {
                label: class_id,
                classes: width,
            });
        }
        Ok(Self { class_id, width })
    }

    pub fn class_id(self) -> usize {
        self.class_id
    }

    pub fn one_hot(self) -> Vec<f32> {
        let mut v = vec![0.0; self.width];
        v[self.class_id] = 1.0;
        v
    }
}

/// `[labels.len(), width]` one-hot matrix.
pub fn one_hot(labels: &[usize], width: usize) -> Result<Tensor> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset("label batch".into()));
    }
    let mut data = vec![0.0; labels.len() * width];
    for (i, &label) in labels.iter().enumerate() {
        let code = LabelCode::new(label, width)?;
        data[i * width + code.class_id()] = 1.0;
    }
    Ok(Tensor::new(vec![labels.len(), width], data)?)
}

/// Posterior parameters `(μ, log σ²)` as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentStats {
    pub mu: Tensor,
    pub logvar: Tensor,
}

/// Posterior parameters recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LatentVars {
    pub mu: Var,
    pub logvar: Var,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    params: ParamSet,
    image: Linear,
    label: Option<Linear>,
    mu: Linear,
    logvar: Linear,
    num_classes: usize,
}

impl Encoder {
    pub fn new(cfg: &CvaeConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let image = Linear::new(
            &mut params,
            "image",
            cfg.image_dim,
            cfg.hidden_dim,
            LEAKY_GAIN,
            rng,
        );
        let (label, fused) = match cfg.conditioning {
            Conditioning::EncoderAndDecoder => (
                Some(Linear::new(
                    &mut params,
                    "label",
                    cfg.num_classes,
                    cfg.label_embed_dim,
                    LEAKY_GAIN,
                    rng,
                )),
                cfg.hidden_dim + cfg.label_embed_dim,
            ),
            Conditioning::DecoderOnly => (None, cfg.hidden_dim),
        };
        let mu = Linear::new(&mut params, "mu", fused, cfg.latent_dim, 1.0, rng);
        let logvar = Linear::new(&mut params, "logvar", fused, cfg.latent_dim, 1.0, rng);
        Self {
            params,
            image,
            label,
            mu,
            logvar,
            num_classes: cfg.num_classes,
        }
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn label_path(&self) -> Option<Linear> {
        self.label
    }

    pub fn bind<'m>(&'m self, tape: &mut Tape, trainable: bool) -> EncoderOnTape<'m> {
        EncoderOnTape {
            encoder: self,
            bound: self.params.bind(tape, trainable),
        }
    }

    /// Tape-free forward pass.
    pub fn encode(&self, x: &Tensor, labels: &[usize]) -> Result<LatentStats> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(one_hot(labels, self.num_classes)?);
        let latent = bound.encode(&mut tape, xv, yv)?;
        Ok(LatentStats {
            mu: tape.value(latent.mu).clone(),
            logvar: tape.value(latent.logvar).clone(),
        })
    }
}

/// An [`Encoder`] whose parameters have been placed on a tape.
pub struct EncoderOnTape<'m> {
    encoder: &'m Encoder,
    bound: Bound,
}

impl EncoderOnTape<'_> {
    pub fn bound(&self) -> &Bound {
        &self.bound
    }

    /// `x`: `[B, d_x]` pixels, `y`: `[B, C]` one-hot labels.
    pub fn encode(&self, tape: &mut Tape, x: Var, y: Var) -> Result<LatentVars> {
        check_batch(tape, x, y)?;
        let e = self.encoder;
        let hx = e.image.forward(tape, &self.bound, x)?;
        let mut h = tape.leaky_relu(hx, LEAK)?;
        if let Some(label) = e.label {
            let hy = label.forward(tape, &self.bound, y)?;
            let hy = tape.leaky_relu(hy, LEAK)?;
            h = tape.concat(h, hy, 1)?;
        }
        let mu = e.mu.forward(tape, &self.bound, h)?;
        let raw = e.logvar.forward(tape, &self.bound, h)?;
        let logvar = tape.clamp(raw, -LOGVAR_LIMIT, LOGVAR_LIMIT)?;
        Ok(LatentVars { mu, logvar })
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    params: ParamSet,
    latent: Linear,
    label: Option<Linear>,
    hidden: Linear,
    output: Linear,
    latent_dim: usize,
    num_classes: usize,
}

impl Decoder {
    pub fn new(cfg: &CvaeConfig, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let latent = Linear::new(
            &mut params,
            "latent",
            cfg.latent_dim,
            cfg.hidden_dim,
            LEAKY_GAIN,
            rng,
        );
        let (label, fused) = match cfg.conditioning {
            Conditioning::EncoderAndDecoder => (
                Some(Linear::new(
                    &mut params,
                    "label",
                    cfg.num_classes,
                    cfg.label_embed_dim,
                    LEAKY_GAIN,
                    rng,
                )),
                cfg.hidden_dim + cfg.label_embed_dim,
            ),
            Conditioning::DecoderOnly => (None, cfg.hidden_dim + cfg.num_classes),
        };
        let hidden = Linear::new(
            &mut params,
            "hidden",
            fused,
            cfg.hidden_dim,
            LEAKY_GAIN,
            rng,
        );
        let output = Linear::new(
            &mut params,
            "output",
            cfg.hidden_dim,
            cfg.image_dim,
            1.0,
            rng,
        );
        Self {
            params,
            latent,
            label,
            hidden,
            output,
            latent_dim: cfg.latent_dim,
            num_classes: cfg.num_classes,
        }
    }

    /// Rebuilds a decoder from a parameter set (e.g. a loaded checkpoint),
    /// inferring the layer sizes from the stored shapes.
    pub fn from_params(params: ParamSet) -> Result<Self> {
        let missing = |n: &str| Error::Checkpoint(format!("decoder parameter `{n}` missing"));
        let latent = Linear::find(&params, "latent").ok_or_else(|| missing("latent"))?;
        let hidden = Linear::find(&params, "hidden").ok_or_else(|| missing("hidden"))?;
        let output = Linear::find(&params, "output").ok_or_else(|| missing("output"))?;
        let label = Linear::find(&params, "label");
        let latent_dim = latent.fan_in(&params);
        let latent_width = latent.fan_out(&params);
        let fused = hidden.fan_in(&params);
        let num_classes = match label {
            Some(l) => {
                if l.fan_out(&params) + latent_width != fused {
                    return Err(Error::Checkpoint(
                        "label path does not match fused width".into(),
                    ));
                }
                l.fan_in(&params)
            }
            None => fused
                .checked_sub(latent_width)
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::Checkpoint("fused width leaves no room for labels".into()))?,
        };
        if hidden.fan_out(&params) != output.fan_in(&params) {
            return Err(Error::Checkpoint("hidden/output widths disagree".into()));
        }
        for id in params.ids() {
            let t = params.value(id);
            let expected_rank = if params.name(id).ends_with(".bias") {
                1
            } else {
                2
            };
            if t.rank() != expected_rank {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has rank {}",
                    params.name(id),
                    t.rank()
                )));
            }
        }
        Ok(Self {
            params,
            latent,
            label,
            hidden,
            output,
            latent_dim,
            num_classes,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_dim(&self) -> usize {
        self.params.value(self.output.bias).len()
    }

    pub fn label_path(&self) -> Option<Linear> {
        self.label
    }

    pub fn conditioning(&self) -> Conditioning {
        if self.label.is_some() {
            Conditioning::EncoderAndDecoder
        } else {
            Conditioning::DecoderOnly
        }
    }

    pub fn bind<'m>(&'m self, tape: &mut Tape, trainable: bool) -> DecoderOnTape<'m> {
        DecoderOnTape {
            decoder: self,
            bound: self.params.bind(tape, trainable),
        }
    }

    /// Tape-free forward pass: mean image for each `(z, y)` row.
    pub fn decode(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let yv = tape.constant(one_hot(labels, self.num_classes)?);
        let out = bound.decode(&mut tape, zv, yv)?;
        Ok(tape.value(out).clone())
    }

    /// `n` images of class `label` decoded from prior draws `z ~ N(0, I)`.
    pub fn sample(&self, label: usize, n: usize, rng: &mut impl Rng) -> Result<Tensor> {
        LabelCode::new(label, self.num_classes)?;
        let z = gaussian(&[n, self.latent_dim], rng);
        self.decode(&z, &vec![label; n])
    }
}

/// A [`Decoder`] whose parameters have been placed on a tape.
pub struct DecoderOnTape<'m> {
    decoder: &'m Decoder,
    bound: Bound,
}

impl DecoderOnTape<'_> {
    pub fn bound(&self) -> &Bound {
        &self.bound
    }

    /// `z`: `[B, d_z]`, `y`: `[B, C]` one-hot. Returns `[B, d_x]` in (0, 1).
    pub fn decode(&self, tape: &mut Tape, z: Var, y: Var) -> Result<Var> {
        check_batch(tape, z, y)?;
        let d = self.decoder;
        if tape.shape(z)[1] != d.latent_dim {
            return Err(Error::ShapeMismatch(format!(
                "latent width {} but decoder expects {}",
                tape.shape(z)[1],
                d.latent_dim
            )));
        }
        let hz = d.latent.forward(tape, &self.bound, z)?;
        let hz = tape.leaky_relu(hz, LEAK)?;
        let hy = match d.label {
            Some(label) => {
                let hy = label.forward(tape, &self.bound, y)?;
                tape.leaky_relu(hy, LEAK)?
            }
            None => y,
        };
        let h = tape.concat(hz, hy, 1)?;
        let h = d.hidden.forward(tape, &self.bound, h)?;
        let h = tape.leaky_relu(h, LEAK)?;
        let logits = d.output.forward(tape, &self.bound, h)?;
        Ok(tape.sigmoid(logits)?)
    }
}

fn check_batch(tape: &Tape, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
        return Err(Error::ShapeMismatch(format!(
            "batch shapes {sa:?} and {sb:?}"
        )));
    }
    Ok(())
}

/// `z = μ + exp(½·log σ²) ⊙ ε`.
pub fn reparameterize(tape: &mut Tape, latent: LatentVars, eps: Var) -> Result<Var> {
    if tape.shape(eps) != tape.shape(latent.mu) {
        return Err(Error::ShapeMismatch(format!(
            "eps {:?} vs mu {:?}",
            tape.shape(eps),
            tape.shape(latent.mu)
        )));
    }
    let half = tape.scale(latent.logvar, 0.5)?;
    let sigma = tape.exp(half)?;
    let noise = tape.mul(sigma, eps)?;
    Ok(tape.add(latent.mu, noise)?)
}

/// Batch mean of `½ Σ_d (μ² + σ² − 1 − log σ²)`, the closed-form
/// `KL[N(μ, σ²) ‖ N(0, I)]`.
pub fn kl_to_prior(tape: &mut Tape, latent: LatentVars) -> Result<Var> {
    let mu_sq = tape.mul(latent.mu, latent.mu)?;
    let var = tape.exp(latent.logvar)?;
    let a = tape.add(mu_sq, var)?;
    let b = tape.sub(a, latent.logvar)?;
    let one = tape.constant(Tensor::scalar(1.0));
    let c = tape.sub(b, one)?;
    let per_sample = tape.sum(c, Some(1))?;
    let mean = tape.mean(per_sample, None)?;
    Ok(tape.scale(mean, 0.5)?)
}

/// The two terms of the CVAE objective plus the intermediates other losses reuse.
#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown {
    pub latent: LatentVars,
    pub z: Var,
    /// Decoder output for the reparameterized `z`.
    pub reconstruction_image: Var,
    pub reconstruction: Var,
    pub variational: Var,
    pub total: Var,
}

/// Reconstruction term `−E_q[log p(x|y,z)]` (single-sample) plus the
/// variational term `KL[q(z|y,x) ‖ p(z)]`.
pub fn cvae_loss(
    tape: &mut Tape,
    encoder: &EncoderOnTape<'_>,
    decoder: &DecoderOnTape<'_>,
    likelihood: Likelihood,
    x: Var,
    y: Var,
    eps: Var,
) -> Result<LossBreakdown> {
    let latent = encoder.encode(tape, x, y)?;
    let z = reparameterize(tape, latent, eps)?;
    let reconstruction_image = decoder.decode(tape, z, y)?;
    let reconstruction = likelihood.loss(tape, reconstruction_image, x)?;
    let variational = kl_to_prior(tape, latent)?;
    let total = tape.add(reconstruction, variational)?;
    Ok(LossBreakdown {
        latent,
        z,
        reconstruction_image,
        reconstruction,
        variational,
        total,
    })
}

/// Encoder/decoder pair.
#[derive(Clone, Debug)]
pub struct CvaeModel {
    config: CvaeConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl CvaeModel {
    pub fn new(config: CvaeConfig, rng: &mut impl Rng) -> Self {
        let encoder = Encoder::new(&config, rng);
        let decoder = Decoder::new(&config, rng);
        Self {
            config,
            encoder,
            decoder,
        }
    }

    pub fn config(&self) -> &CvaeConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.encoder.params().numel() + self.decoder.params().numel()
    }

    pub fn encode(&self, x: &Tensor, labels: &[usize]) -> Result<LatentStats> {
        self.encoder.encode(x, labels)
    }

    pub fn decode(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
        self.decoder.decode(z, labels)
    }

    pub fn sample(&self, label: usize, n: usize, rng: &mut impl Rng) -> Result<Tensor> {
        self.decoder.sample(label, n, rng)
    }
}
