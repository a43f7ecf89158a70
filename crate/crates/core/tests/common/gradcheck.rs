//! Finite-difference gradient checks, one function per tape operation.
//!
//! Each op is wrapped as `L = Σ wᵢ·op(x)ᵢ` with random weights, and its
//! tape gradient is compared with central differences of an independent
//! `f64` implementation of the same formula.

use lifegen::autodiff::{seeded_rng, Tape, Tensor, Var};
use rand::Rng;

const H: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;
type Oracle = dyn Fn(&[Vec<f64>]) -> f64;

fn random(rng: &mut impl Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Keeps values at least `gap` away from each kink.
fn away_from(mut t: Tensor, kinks: &[f32], gap: f32) -> Tensor {
    for v in t.data_mut() {
        for &k in kinks {
            if (*v - k).abs() < gap {
                *v = if *v >= k { k + gap } else { k - gap };
            }
        }
    }
    t
}

fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(n)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-6)
}

/// Returns the worst relative error over all inputs.
fn check(inputs: &[Tensor], build: &Build, oracle: &Oracle) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = build(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let base: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.data().iter().map(|&v| f64::from(v)).collect())
        .collect();
    let mut worst = 0.0f64;
    for (i, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(*var) {
            Some(g) => g.iter().map(|&v| f64::from(v)).collect(),
            None => vec![0.0; base[i].len()],
        };
        let mut numeric = vec![0.0; base[i].len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut plus = base.clone();
            plus[i][j] += H;
            let mut minus = base.clone();
            minus[i][j] -= H;
            *slot = (oracle(&plus) - oracle(&minus)) / (2.0 * H);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Builds `Σ w ⊙ y` on the tape.
fn weighted(tape: &mut Tape, y: Var, w: &Tensor) -> Var {
    let wv = tape.constant(w.clone());
    let p = tape.mul(y, wv).unwrap();
    tape.sum(p, None).unwrap()
}

fn dot(w: &Tensor, y: &[f64]) -> f64 {
    w.data().iter().zip(y).map(|(&a, b)| f64::from(a) * b).sum()
}

fn shape2(rng: &mut impl Rng) -> [usize; 2] {
    [rng.gen_range(1..5), rng.gen_range(1..6)]
}

fn pointwise(
    seed: u64,
    lo: f32,
    hi: f32,
    kinks: &[f32],
    op: fn(&mut Tape, Var) -> Var,
    f: fn(f64) -> f64,
) -> f64 {
    let mut rng = seeded_rng(seed);
    let shape = shape2(&mut rng);
    let x = away_from(random(&mut rng, &shape, lo, hi), kinks, 0.05);
    let w = random(&mut rng, &shape, -1.0, 1.0);
    let w2 = w.clone();
    check(
        &[x],
        &move |tape, v| {
            let y = op(tape, v[0]);
            weighted(tape, y, &w)
        },
        &move |xs| dot(&w2, &xs[0].iter().map(|&v| f(v)).collect::<Vec<_>>()),
    )
}

fn sigmoid64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(seed: u64) -> f64 {
    pointwise(
        seed,
        -2.0,
        2.0,
        &[0.0],
        |t, x| t.relu(x).unwrap(),
        |x| x.max(0.0),
    )
}

pub fn leaky_relu(seed: u64) -> f64 {
    pointwise(
        seed,
        -2.0,
        2.0,
        &[0.0],
        |t, x| t.leaky_relu(x, 0.2).unwrap(),
        |x| if x > 0.0 { x } else { 0.2 * x },
    )
}

pub fn sigmoid(seed: u64) -> f64 {
    pointwise(
        seed,
        -4.0,
        4.0,
        &[],
        |t, x| t.sigmoid(x).unwrap(),
        sigmoid64,
    )
}

pub fn tanh(seed: u64) -> f64 {
    pointwise(seed, -3.0, 3.0, &[], |t, x| t.tanh(x).unwrap(), f64::tanh)
}

pub fn exp(seed: u64) -> f64 {
    pointwise(seed, -2.0, 2.0, &[], |t, x| t.exp(x).unwrap(), f64::exp)
}

pub fn log(seed: u64) -> f64 {
    pointwise(seed, 0.2, 3.0, &[], |t, x| t.log(x).unwrap(), f64::ln)
}

pub fn scale(seed: u64) -> f64 {
    pointwise(
        seed,
        -2.0,
        2.0,
        &[],
        |t, x| t.scale(x, -1.75).unwrap(),
        |x| -1.75 * x,
    )
}

pub fn clamp(seed: u64) -> f64 {
    pointwise(
        seed,
        -2.0,
        2.0,
        &[-1.0, 1.0],
        |t, x| t.clamp(x, -1.0, 1.0).unwrap(),
        |x| x.clamp(-1.0, 1.0),
    )
}

/// add, sub or mul picked from the seed, against a same-shape, row-vector
/// or scalar right operand.
pub fn binary(seed: u64) -> f64 {
    let (op, broadcast) = (seed % 3, (seed / 3) % 3);
    let mut rng = seeded_rng(seed);
    let shape = shape2(&mut rng);
    let b_shape: Vec<usize> = match broadcast {
        0 => shape.to_vec(),
        1 => vec![shape[1]],
        _ => vec![1],
    };
    let a = random(&mut rng, &shape, -2.0, 2.0);
    let b = random(&mut rng, &b_shape, -2.0, 2.0);
    let w = random(&mut rng, &shape, -1.0, 1.0);
    let (w2, nb) = (w.clone(), b.len());
    check(
        &[a, b],
        &move |tape, v| {
            let y = match op {
                0 => tape.add(v[0], v[1]),
                1 => tape.sub(v[0], v[1]),
                _ => tape.mul(v[0], v[1]),
            }
            .unwrap();
            weighted(tape, y, &w)
        },
        &move |xs| {
            let y: Vec<f64> = xs[0]
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let b = xs[1][i % nb];
                    match op {
                        0 => a + b,
                        1 => a - b,
                        _ => a * b,
                    }
                })
                .collect();
            dot(&w2, &y)
        },
    )
}

pub fn matmul(seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let (m, k, n) = (
        rng.gen_range(1..5),
        rng.gen_range(1..5),
        rng.gen_range(1..5),
    );
    let a = random(&mut rng, &[m, k], -2.0, 2.0);
    let b = random(&mut rng, &[k, n], -2.0, 2.0);
    let w = random(&mut rng, &[m, n], -1.0, 1.0);
    let w2 = w.clone();
    check(
        &[a, b],
        &move |tape, v| {
            let y = tape.matmul(v[0], v[1]).unwrap();
            weighted(tape, y, &w)
        },
        &move |xs| {
            let mut y = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    for p in 0..k {
                        y[i * n + j] += xs[0][i * k + p] * xs[1][p * n + j];
                    }
                }
            }
            dot(&w2, &y)
        },
    )
}

/// sum or mean over rows, columns or everything (axis 2).
pub fn reduce(seed: u64) -> f64 {
    let (mean, axis) = (seed % 2 == 1, ((seed / 2) % 3) as usize);
    let mut rng = seeded_rng(seed);
    let shape = shape2(&mut rng);
    let x = random(&mut rng, &shape, -2.0, 2.0);
    let out_shape: Vec<usize> = match axis {
        0 => vec![shape[1]],
        1 => vec![shape[0]],
        _ => vec![1],
    };
    let w = random(&mut rng, &out_shape, -1.0, 1.0);
    let w2 = w.clone();
    check(
        &[x],
        &move |tape, v| {
            let ax = if axis < 2 { Some(axis) } else { None };
            let y = if mean {
                tape.mean(v[0], ax)
            } else {
                tape.sum(v[0], ax)
            }
            .unwrap();
            weighted(tape, y, &w)
        },
        &move |xs| {
            let (r, c) = (shape[0], shape[1]);
            let mut y = vec![0.0; out_shape[0]];
            for i in 0..r {
                for j in 0..c {
                    let slot = match axis {
                        0 => j,
                        1 => i,
                        _ => 0,
                    };
                    y[slot] += xs[0][i * c + j];
                }
            }
            let count = match axis {
                0 => r,
                1 => c,
                _ => r * c,
            } as f64;
            if mean {
                y.iter_mut().for_each(|v| *v /= count);
            }
            dot(&w2, &y)
        },
    )
}

pub fn concat(seed: u64) -> f64 {
    let axis = (seed % 2) as usize;
    let mut rng = seeded_rng(seed);
    let (r, c1, c2) = (
        rng.gen_range(1..4),
        rng.gen_range(1..4),
        rng.gen_range(1..4),
    );
    let (sa, sb) = if axis == 1 {
        ([r, c1], [r, c2])
    } else {
        ([c1, r], [c2, r])
    };
    let a = random(&mut rng, &sa, -2.0, 2.0);
    let b = random(&mut rng, &sb, -2.0, 2.0);
    let out: Vec<usize> = if axis == 1 {
        vec![r, c1 + c2]
    } else {
        vec![c1 + c2, r]
    };
    let w = random(&mut rng, &out, -1.0, 1.0);
    let w2 = w.clone();
    check(
        &[a, b],
        &move |tape, v| {
            let y = tape.concat(v[0], v[1], axis).unwrap();
            weighted(tape, y, &w)
        },
        &move |xs| {
            let y: Vec<f64> = if axis == 0 {
                xs[0].iter().chain(&xs[1]).copied().collect()
            } else {
                (0..r)
                    .flat_map(|i| {
                        xs[0][i * c1..(i + 1) * c1]
                            .iter()
                            .chain(&xs[1][i * c2..(i + 1) * c2])
                            .copied()
                    })
                    .collect()
            };
            dot(&w2, &y)
        },
    )
}

pub fn bce(seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let shape = shape2(&mut rng);
    let p = random(&mut rng, &shape, 0.05, 0.95);
    let t = random(&mut rng, &shape, 0.0, 1.0);
    check(
        &[p, t],
        &|tape, v| tape.bce(v[0], v[1]).unwrap(),
        &move |xs| {
            let s: f64 = xs[0]
                .iter()
                .zip(&xs[1])
                .map(|(&p, &t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
                .sum();
            s / shape[0] as f64
        },
    )
}

pub fn mse(seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let shape = shape2(&mut rng);
    let p = random(&mut rng, &shape, -1.0, 1.0);
    let t = random(&mut rng, &shape, -1.0, 1.0);
    check(
        &[p, t],
        &|tape, v| tape.mse(v[0], v[1]).unwrap(),
        &move |xs| {
            let s: f64 = xs[0].iter().zip(&xs[1]).map(|(p, t)| (p - t).powi(2)).sum();
            s / shape[0] as f64
        },
    )
}

pub fn cross_entropy(seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let (b, c) = (rng.gen_range(1..5), rng.gen_range(2..6));
    let logits = random(&mut rng, &[b, c], -3.0, 3.0);
    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
    let l2 = labels.clone();
    check(
        &[logits],
        &move |tape, v| tape.cross_entropy(v[0], &labels).unwrap(),
        &move |xs| {
            let mut total = 0.0;
            for (r, &label) in l2.iter().enumerate() {
                let row = &xs[0][r * c..(r + 1) * c];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[label];
            }
            total / b as f64
        },
    )
}

/// A small composite: the variational term on random statistics.
pub fn kl_composite(seed: u64) -> f64 {
    use lifegen::cvae::{kl_to_prior, LatentVars};
    let mut rng = seeded_rng(seed);
    let shape = shape2(&mut rng);
    let mu = random(&mut rng, &shape, -2.0, 2.0);
    let lv = random(&mut rng, &shape, -2.0, 2.0);
    check(
        &[mu, lv],
        &|tape, v| {
            kl_to_prior(
                tape,
                LatentVars {
                    mu: v[0],
                    logvar: v[1],
                },
            )
            .unwrap()
        },
        &move |xs| {
            let s: f64 = xs[0]
                .iter()
                .zip(&xs[1])
                .map(|(m, l)| m * m + l.exp() - 1.0 - l)
                .sum();
            0.5 * s / shape[0] as f64
        },
    )
}

pub type Check = fn(u64) -> f64;

pub const OPS: [(&str, Check); 16] = [
    ("relu", relu),
    ("leaky_relu", leaky_relu),
    ("sigmoid", sigmoid),
    ("tanh", tanh),
    ("exp", exp),
    ("log", log),
    ("scale", scale),
    ("clamp", clamp),
    ("add/sub/mul", binary),
    ("matmul", matmul),
    ("sum/mean", reduce),
    ("concat", concat),
    ("bce", bce),
    ("mse", mse),
    ("cross_entropy", cross_entropy),
    ("kl_to_prior", kl_composite),
];
