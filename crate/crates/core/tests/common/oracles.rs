//! Independent reference computations for the variational term and the
//! Fréchet distance.

use lifegen::autodiff::{seeded_rng, Tape, Tensor};
use lifegen::cvae::{kl_to_prior, LatentVars};
use lifegen::metrics::{frechet_distance, FeatureStats, Matrix};
use rand::Rng;

pub const KL_SAMPLES: usize = 1_000_000;
pub const KL_TOLERANCE: f64 = 1e-2;
pub const FRECHET_TOLERANCE: f64 = 1e-5;

fn normal(rng: &mut impl Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `E_q[log q(z) − log p(z)]` for a diagonal Gaussian `q` and a standard
/// normal `p`, estimated from `KL_SAMPLES` draws.
pub fn kl_monte_carlo(mu: &[f32], logvar: &[f32], rng: &mut impl Rng) -> f64 {
    let mut total = 0.0;
    for _ in 0..KL_SAMPLES {
        let mut log_ratio = 0.0;
        for (&m, &lv) in mu.iter().zip(logvar) {
            let (m, lv) = (f64::from(m), f64::from(lv));
            let e = normal(rng);
            let z = m + (0.5 * lv).exp() * e;
            // The 2π terms cancel.
            log_ratio += -0.5 * e * e - 0.5 * lv + 0.5 * z * z;
        }
        total += log_ratio;
    }
    total / KL_SAMPLES as f64
}

/// Twenty random latent statistics: (closed form, Monte-Carlo estimate).
pub fn kl_cases() -> Vec<(f64, f64)> {
    let mut rng = seeded_rng(2024);
    (0..20)
        .map(|_| {
            let d = rng.gen_range(1..5);
            let mu: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let logvar: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut tape = Tape::new();
            let m = tape.constant(Tensor::new(vec![1, d], mu.clone()).unwrap());
            let l = tape.constant(Tensor::new(vec![1, d], logvar.clone()).unwrap());
            let kl = kl_to_prior(&mut tape, LatentVars { mu: m, logvar: l }).unwrap();
            let closed = f64::from(tape.value(kl).item().unwrap());
            (closed, kl_monte_carlo(&mu, &logvar, &mut rng))
        })
        .collect()
}

pub fn stats(mean: Vec<f64>, cov: Matrix) -> FeatureStats {
    FeatureStats { mean, cov, n: 1000 }
}

/// `BᵀB` for a random `d×d` matrix `B` with entries in `[-1, 1]/√d`.
pub fn random_psd(rng: &mut impl Rng, d: usize) -> Matrix {
    let s = 1.0 / (d as f64).sqrt();
    let b = Matrix::new(d, (0..d * d).map(|_| rng.gen_range(-s..s)).collect()).unwrap();
    b.transpose().matmul(&b).unwrap()
}

/// Random diagonal Gaussians: (computed distance, `Σ(√aᵢ − √bᵢ)² + ‖Δμ‖²`).
pub fn frechet_diagonal_case(seed: u64) -> (f64, f64) {
    let mut rng = seeded_rng(seed);
    let d = rng.gen_range(1..16);
    let a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..4.0)).collect();
    let b: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..4.0)).collect();
    let ma: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mb: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let expected = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2))
        .sum::<f64>()
        + ma.iter()
            .zip(&mb)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>();
    let got = frechet_distance(&stats(ma, Matrix::diag(&a)), &stats(mb, Matrix::diag(&b))).unwrap();
    (got, expected)
}

/// Non-negativity, symmetry and zero self-distance on full covariances.
pub fn frechet_axioms(seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed);
    let d = rng.gen_range(1..9);
    let sa = stats(
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        random_psd(&mut rng, d),
    );
    let sb = stats(
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        random_psd(&mut rng, d),
    );
    let ab = frechet_distance(&sa, &sb).map_err(|e| e.to_string())?;
    let ba = frechet_distance(&sb, &sa).map_err(|e| e.to_string())?;
    let aa = frechet_distance(&sa, &sa).map_err(|e| e.to_string())?;
    if ab < 0.0 {
        return Err(format!("negative distance {ab}"));
    }
    if (ab - ba).abs() >= 1e-6 {
        return Err(format!("asymmetric: {ab} vs {ba}"));
    }
    if aa >= 1e-6 {
        return Err(format!("self distance {aa}"));
    }
    Ok(())
}
