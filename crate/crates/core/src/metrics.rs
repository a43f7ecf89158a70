//! Generated-data accuracy and a feature-space Fréchet distance.
//!
//! ACC trains a small MLP purely on generated samples and scores it on real
//! test images. The Fréchet distance compares Gaussian fits of the
//! penultimate activations of a reference classifier trained once on real
//! data.

use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{seeded_rng, Adam, AdamConfig, ParamSet, SeededRng, Tape, Tensor};
use crate::cvae::Decoder;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::Linear;

// ── classifier ─────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden_dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub holdout_fraction: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            max_epochs: 50,
            patience: 3,
            holdout_fraction: 0.1,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// `d_x → hidden → C` ReLU MLP. Predictions are restricted to the classes it
/// was trained on.
#[derive(Clone, Debug)]
pub struct Classifier {
    params: ParamSet,
    hidden: Linear,
    output: Linear,
    classes: Vec<usize>,
    epochs_trained: usize,
}

const INFERENCE_CHUNK: usize = 1024;

impl Classifier {
    fn new(
        input_dim: usize,
        num_classes: usize,
        classes: Vec<usize>,
        cfg: &ClassifierConfig,
        rng: &mut SeededRng,
    ) -> Self {
        let mut params = ParamSet::new();
        let hidden = Linear::new(
            &mut params,
            "hidden",
            input_dim,
            cfg.hidden_dim,
            std::f32::consts::SQRT_2,
            rng,
        );
        let output = Linear::new(&mut params, "output", cfg.hidden_dim, num_classes, 1.0, rng);
        Self {
            params,
            hidden,
            output,
            classes,
            epochs_trained: 0,
        }
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    fn forward(
        &self,
        tape: &mut Tape,
        trainable: bool,
        x: Tensor,
    ) -> Result<(crate::autodiff::Var, crate::autodiff::Var)> {
        let bound = self.params.bind(tape, trainable);
        let xv = tape.constant(x);
        let h = self.hidden.forward(tape, &bound, xv)?;
        let h = tape.relu(h)?;
        let logits = self.output.forward(tape, &bound, h)?;
        Ok((h, logits))
    }

    fn chunked<T>(
        &self,
        images: &Tensor,
        mut f: impl FnMut(&Tape, crate::autodiff::Var, crate::autodiff::Var) -> T,
    ) -> Result<Vec<T>> {
        let n = images.shape()[0];
        let mut out = Vec::new();
        for start in (0..n).step_by(INFERENCE_CHUNK) {
            let rows: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(n)).collect();
            let mut tape = Tape::new();
            let (h, logits) = self.forward(&mut tape, false, images.select_rows(&rows))?;
            out.push(f(&tape, h, logits));
        }
        Ok(out)
    }

    /// Arg-max over the trained classes.
    pub fn predict(&self, images: &Tensor) -> Result<Vec<usize>> {
        let parts = self.chunked(images, |tape, _, logits| {
            let v = tape.value(logits);
            (0..v.shape()[0])
                .map(|r| {
                    let row = v.row(r);
                    *self
                        .classes
                        .iter()
                        .max_by(|&&a, &&b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                        .expect("classifier has at least one class")
                })
                .collect::<Vec<_>>()
        })?;
        Ok(parts.concat())
    }

    /// Penultimate (post-ReLU hidden) activations, `[n, hidden_dim]`.
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        let parts = self.chunked(images, |tape, h, _| tape.value(h).data().to_vec())?;
        let data = parts.concat();
        let d = data.len() / images.shape()[0];
        Ok(Tensor::new(vec![images.shape()[0], d], data)?)
    }

    fn mean_loss(&self, data: &LabeledDataset, idx: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in idx.chunks(INFERENCE_CHUNK) {
            let (x, y) = data.batch(chunk)?;
            let mut tape = Tape::new();
            let (_, logits) = self.forward(&mut tape, false, x)?;
            let loss = tape.cross_entropy(logits, &y)?;
            total += f64::from(tape.value(loss).item()?) * chunk.len() as f64;
        }
        Ok(total / idx.len() as f64)
    }
}

/// Trains on `data` until the holdout loss stops improving for `patience`
/// epochs (at most `max_epochs`) and returns the best-holdout weights.
/// Every class in `classes` must be present in `data`.
pub fn train_eval_classifier(
    data: &LabeledDataset,
    classes: &[usize],
    cfg: &ClassifierConfig,
) -> Result<Classifier> {
    if classes.is_empty() || data.is_empty() {
        return Err(Error::EmptyDataset(data.name().to_string()));
    }
    let present = data.classes();
    if let Some(&missing) = classes.iter().find(|c| !present.contains(c)) {
        return Err(Error::ClassMissing(missing));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut sorted = classes.to_vec();
    sorted.sort_unstable();
    let num_outputs = crate::data::NUM_CLASSES.max(sorted[sorted.len() - 1] + 1);
    let mut model = Classifier::new(data.pixels_per_image(), num_outputs, sorted, cfg, &mut rng);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let holdout = ((data.len() as f64 * cfg.holdout_fraction).round() as usize).min(data.len() - 1);
    let (val_idx, train_idx) = order.split_at(holdout);
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::new(cfg.adam, &model.params);
    let mut best: Option<(f64, ParamSet)> = None;
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            let (x, y) = data.batch(batch)?;
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape, true);
            let xv = tape.constant(x);
            let h = model.hidden.forward(&mut tape, &bound, xv)?;
            let h = tape.relu(h)?;
            let logits = model.output.forward(&mut tape, &bound, h)?;
            let loss = tape.cross_entropy(logits, &y)?;
            let grads = tape.backward(loss)?;
            model.params.accumulate(&bound, &grads);
            adam.step(&mut model.params)?;
        }
        model.epochs_trained = epoch + 1;
        if val_idx.is_empty() {
            continue;
        }
        let val = model.mean_loss(data, val_idx)?;
        match &best {
            Some((b, _)) if val >= *b => {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
            _ => {
                best = Some((val, model.params.clone()));
                stale = 0;
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(model)
}

/// Accuracy (percent) with a per-class breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub percent: f64,
    /// `(class, percent correct, sample count)` per class present in the test set.
    pub per_class: Vec<(usize, f64, usize)>,
}

/// Scores `predict` against `labels`.
pub fn accuracy_from_predictions(predictions: &[usize], labels: &[usize]) -> Accuracy {
    let mut per: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    let mut correct = 0;
    for (&p, &t) in predictions.iter().zip(labels) {
        let e = per.entry(t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
            correct += 1;
        }
    }
    let pct = |c: usize, n: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * c as f64 / n as f64
        }
    };
    Accuracy {
        percent: pct(correct, labels.len()),
        per_class: per
            .into_iter()
            .map(|(k, (c, n))| (k, pct(c, n), n))
            .collect(),
    }
}

pub fn acc(classifier: &Classifier, real_test: &LabeledDataset) -> Result<Accuracy> {
    if real_test.is_empty() {
        return Err(Error::EmptyDataset(real_test.name().to_string()));
    }
    let idx: Vec<usize> = (0..real_test.len()).collect();
    let (x, y) = real_test.batch(&idx)?;
    Ok(accuracy_from_predictions(&classifier.predict(&x)?, &y))
}

// ── Gaussian statistics and the Fréchet distance ───────────────────────

/// Dense square matrix in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j];
            }
        }
        Self { n, data }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(self.n, other.n));
        }
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        Ok(Matrix { n, data })
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn symmetrized(&self) -> Matrix {
        let t = self.transpose();
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&t.data)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        }
    }
}

/// Eigenvalues and column eigenvectors of a symmetric matrix by cyclic
/// Jacobi rotations.
pub fn symmetric_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.n;
    let mut a = m.data.clone();
    let mut v = Matrix::identity(n).data;
    let scale = m.frobenius().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    (values, Matrix { n, data: v })
}

const SYMMETRY_TOLERANCE: f64 = 1e-6;

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// (numerical noise) are clamped to zero.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    let max_abs = m.data.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * max_abs {
        return Err(Error::NotSymmetric(asym));
    }
    let (values, vectors) = symmetric_eigen(&m.symmetrized());
    let n = m.n;
    let roots: Vec<f64> = values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n)
                .map(|k| vectors.get(i, k) * roots[k] * vectors.get(j, k))
                .sum();
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    Ok(Matrix { n, data })
}

/// Mean and ridge-regularised unbiased covariance of a feature sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub n: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample covariance without the ridge term.
pub fn raw_covariance(features: &Tensor) -> Result<(Vec<f64>, Matrix)> {
    let (n, d) = features.dims2()?;
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut mean = vec![0.0f64; d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(features.row(r)) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0f64; d * d];
    let mut centred = vec![0.0f64; d];
    for r in 0..n {
        for (c, (&v, m)) in centred.iter_mut().zip(features.row(r).iter().zip(&mean)) {
            *c = f64::from(v) - m;
        }
        for i in 0..d {
            let ci = centred[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += ci * centred[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok((mean, Matrix { n: d, data: cov }))
}

/// Mean, unbiased covariance plus `λI` with `λ = 1e-6·trace/d`.
pub fn feature_stats(features: &Tensor) -> Result<FeatureStats> {
    let (n, d) = features.dims2()?;
    let (mean, mut cov) = raw_covariance(features)?;
    if n < d + 1 {
        warn!("covariance from {n} samples in {d} dimensions is rank deficient");
    }
    let ridge = 1e-6 * cov.trace() / d as f64;
    for i in 0..d {
        cov.data[i * d + i] += ridge;
    }
    Ok(FeatureStats { mean, cov, n })
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2·(Σa^½ Σb Σa^½)^½)`, clamped at zero.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let mean_term: f64 = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let root_a = psd_sqrt(&a.cov)?;
    let inner = root_a.matmul(&b.cov)?.matmul(&root_a)?.symmetrized();
    let cross = psd_sqrt(&inner)?.trace();
    let value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

// ── checkpoint evaluation ──────────────────────────────────────────────

/// One (ACC, Fréchet) row for a task checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: usize,
    pub labels: Vec<usize>,
    pub acc_percent: f64,
    pub frechet: f64,
    /// `(class, percent)` on the real test set.
    pub per_class_acc: Vec<(usize, f64)>,
    /// Training wall-clock for this task (metric evaluation excluded).
    pub train_seconds: f64,
    pub eval_seconds: f64,
    pub seed: u64,
}

/// Fixed context shared by every evaluation of a run.
pub struct Evaluator {
    pub reference: Classifier,
    pub classifier: ClassifierConfig,
    pub per_class_samples: usize,
    real_features_cache: std::cell::RefCell<Option<(Vec<usize>, FeatureStats)>>,
}

impl Evaluator {
    /// Trains the reference feature extractor on real training data.
    pub fn new(
        real_train: &LabeledDataset,
        classifier: ClassifierConfig,
        per_class_samples: usize,
    ) -> Result<Self> {
        let classes = real_train.classes();
        let reference = train_eval_classifier(real_train, &classes, &classifier)?;
        Ok(Self::with_reference(
            reference,
            classifier,
            per_class_samples,
        ))
    }

    pub fn with_reference(
        reference: Classifier,
        classifier: ClassifierConfig,
        per_class_samples: usize,
    ) -> Self {
        Self {
            reference,
            classifier,
            per_class_samples,
            real_features_cache: Default::default(),
        }
    }

    fn real_stats(&self, real_test: &LabeledDataset, labels: &[usize]) -> Result<FeatureStats> {
        if let Some((cached_labels, stats)) = self.real_features_cache.borrow().as_ref() {
            if cached_labels == labels {
                return Ok(stats.clone());
            }
        }
        let idx: Vec<usize> = (0..real_test.len()).collect();
        let (x, _) = real_test.batch(&idx)?;
        let stats = feature_stats(&self.reference.features(&x)?)?;
        *self.real_features_cache.borrow_mut() = Some((labels.to_vec(), stats.clone()));
        Ok(stats)
    }

    /// Scores an arbitrary labeled image set as if it had been generated.
    pub fn evaluate_dataset(
        &self,
        generated: &LabeledDataset,
        labels: &[usize],
        real_test: &LabeledDataset,
    ) -> Result<(Accuracy, f64)> {
        let real = real_test.filter_classes(labels);
        let classifier = train_eval_classifier(generated, labels, &self.classifier)?;
        let accuracy = acc(&classifier, &real)?;
        let idx: Vec<usize> = (0..generated.len()).collect();
        let (gx, _) = generated.batch(&idx)?;
        let gen_stats = feature_stats(&self.reference.features(&gx)?)?;
        let real_stats = self.real_stats(&real, labels)?;
        Ok((accuracy, frechet_distance(&gen_stats, &real_stats)?))
    }

    /// Generates `per_class_samples` images per learned label and scores them.
    pub fn evaluate_checkpoint(
        &self,
        decoder: &Decoder,
        labels: &[usize],
        real_test: &LabeledDataset,
        rng: &mut SeededRng,
    ) -> Result<(Accuracy, f64)> {
        let generated = generate_dataset(decoder, labels, self.per_class_samples, rng)?;
        self.evaluate_dataset(&generated, labels, real_test)
    }

    /// Convenience wrapper producing a full report row.
    #[allow(clippy::too_many_arguments)]
    pub fn report(
        &self,
        task: usize,
        decoder: &Decoder,
        labels: &[usize],
        real_test: &LabeledDataset,
        train_seconds: f64,
        seed: u64,
        rng: &mut SeededRng,
    ) -> Result<MetricsReport> {
        let start = Instant::now();
        let (accuracy, frechet) = self.evaluate_checkpoint(decoder, labels, real_test, rng)?;
        Ok(MetricsReport {
            task,
            labels: labels.to_vec(),
            acc_percent: accuracy.percent,
            frechet,
            per_class_acc: accuracy.per_class.iter().map(|&(c, p, _)| (c, p)).collect(),
            train_seconds,
            eval_seconds: start.elapsed().as_secs_f64(),
            seed,
        })
    }
}

/// Decodes `per_class` prior samples for each label.
pub fn generate_dataset(
    decoder: &Decoder,
    labels: &[usize],
    per_class: usize,
    rng: &mut SeededRng,
) -> Result<LabeledDataset> {
    let side = (decoder.image_dim() as f64).sqrt() as usize;
    let mut images = Vec::with_capacity(labels.len() * per_class * decoder.image_dim());
    let mut ids = Vec::with_capacity(labels.len() * per_class);
    for &label in labels {
        let t = decoder.sample(label, per_class, rng)?;
        images.extend(t.data().iter().map(|v| v.clamp(0.0, 1.0)));
        ids.extend(std::iter::repeat_n(label, per_class));
    }
    LabeledDataset::new("generated", side, images, ids)
}

// ── image grids ────────────────────────────────────────────────────────

pub const GRID_SEPARATOR: usize = 2;
const SEPARATOR_LEVEL: u8 = 128;

/// 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Binary PGM (`P5`).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Tiles the first `rows·cols` square images row-major with 2-pixel separators.
pub fn image_grid(images: &[&[f32]], side: usize, rows: usize, cols: usize) -> Result<GrayImage> {
    let needed = rows * cols;
    if images.len() < needed || needed == 0 {
        return Err(Error::TooFewImages {
            needed,
            got: images.len(),
        });
    }
    let width = cols * side + (cols - 1) * GRID_SEPARATOR;
    let height = rows * side + (rows - 1) * GRID_SEPARATOR;
    let mut pixels = vec![SEPARATOR_LEVEL; width * height];
    for (k, img) in images.iter().take(needed).enumerate() {
        if img.len() != side * side {
            return Err(Error::ShapeMismatch(format!(
                "image {k} has {} pixels",
                img.len()
            )));
        }
        let (r, c) = (k / cols, k % cols);
        let (y0, x0) = (r * (side + GRID_SEPARATOR), c * (side + GRID_SEPARATOR));
        for y in 0..side {
            for x in 0..side {
                pixels[(y0 + y) * width + x0 + x] = to_byte(img[y * side + x]);
            }
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn to_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gaussian;

    #[test]
    fn psd_sqrt_simple_cases() {
        let id = psd_sqrt(&Matrix::identity(3)).unwrap();
        assert!(id.sub(&Matrix::identity(3)).frobenius() < 1e-12);
        let r = psd_sqrt(&Matrix::diag(&[4.0, 9.0])).unwrap();
        assert!(r.sub(&Matrix::diag(&[2.0, 3.0])).frobenius() < 1e-12);
        let asym = Matrix::new(2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(psd_sqrt(&asym), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn frechet_simple_cases() {
        let stats = |mean: Vec<f64>, cov: Matrix| FeatureStats { mean, cov, n: 100 };
        let a = stats(vec![1.0, 0.0], Matrix::identity(2));
        let b = stats(vec![0.0, 0.0], Matrix::identity(2));
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-12);
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = stats(vec![0.0; 3], Matrix::identity(3));
        assert!(matches!(
            frechet_distance(&a, &c),
            Err(Error::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn feature_stats_constant_and_small() {
        let t = Tensor::full(&[5, 3], 0.25);
        let s = feature_stats(&t).unwrap();
        assert!(s.mean.iter().all(|&m| (m - 0.25).abs() < 1e-12));
        assert!(s.cov.data().iter().all(|&v| v == 0.0));
        let one = Tensor::full(&[1, 3], 0.25);
        assert!(matches!(
            feature_stats(&one),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn covariance_symmetric_before_ridge() {
        let t = gaussian(&[50, 6], &mut seeded_rng(3));
        let (_, cov) = raw_covariance(&t).unwrap();
        assert!(cov.max_asymmetry() <= 1e-12);
    }

    #[test]
    fn accuracy_breakdown() {
        let a = accuracy_from_predictions(&[0, 1, 1, 2], &[0, 1, 2, 2]);
        assert_eq!(a.percent, 75.0);
        assert_eq!(
            a.per_class,
            vec![(0, 100.0, 1), (1, 100.0, 1), (2, 50.0, 2)]
        );
        let perfect = accuracy_from_predictions(&[3, 4], &[3, 4]);
        assert_eq!(perfect.percent, 100.0);
    }

    #[test]
    fn grid_layout_and_header() {
        let img = vec![1.0f32; 4];
        let dark = vec![0.0f32; 4];
        let imgs: Vec<&[f32]> = vec![&img, &dark, &img, &dark];
        let g = image_grid(&imgs, 2, 2, 2).unwrap();
        assert_eq!((g.width, g.height), (6, 6));
        assert_eq!(g.pixels[0], 255);
        assert_eq!(g.pixels[2], SEPARATOR_LEVEL);
        assert_eq!(g.pixels[4], 0);
        let pgm = g.to_pgm();
        assert!(pgm.starts_with(b"P5\n6 6\n255\n"));
        assert_eq!(pgm.len(), b"P5\n6 6\n255\n".len() + 36);
        assert!(matches!(
            image_grid(&imgs, 2, 3, 2),
            Err(Error::TooFewImages { .. })
        ));
    }

    #[test]
    fn byte_mapping_rounds_and_clamps() {
        assert_eq!(to_byte(0.5), 128);
        assert_eq!(to_byte(1.2), 255);
        assert_eq!(to_byte(-0.1), 0);
        assert_eq!(to_byte(0.2), 51);
    }
}
