use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;

/// The seeded generator used everywhere randomness is needed.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I.i.d. standard normal samples via the Box–Muller transform. Each pair of
/// uniforms `(u1, u2)` yields `r·cos(2πu2)` then `r·sin(2πu2)` with
/// `r = √(−2 ln u1)` and `u1 ∈ (0, 1]`.
pub fn gaussian(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len + 1);
    while data.len() < len {
        let u1 = 1.0 - rng.gen::<f64>();
        let u2 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        data.push((r * theta.cos()) as f32);
        data.push((r * theta.sin()) as f32);
    }
    data.truncate(len);
    Tensor::new(shape.to_vec(), data).expect("shape product matches length")
}

/// Independent generator for one purpose (initialisation, shuffling, noise,
/// ...) derived from a run seed. Streams never overlap for distinct ids.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
