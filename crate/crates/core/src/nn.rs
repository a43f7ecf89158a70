//! Dense layers over a [`ParamSet`].

use rand::Rng;

use crate::autodiff::{AutodiffError, Bound, ParamId, ParamSet, Tape, Tensor, Var};

/// Gain for leaky-ReLU(0.2) layers under Kaiming initialisation.
pub const LEAKY_GAIN: f32 = 1.386_750_5; // √(2 / (1 + 0.2²))

/// Fully connected layer `y = x·W + b` with `W` stored as `[fan_in, fan_out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Registers `<name>.weight` and `<name>.bias`. Weights are uniform with
    /// bound `gain·√(3/fan_in)`, biases uniform with bound `1/√fan_in`.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f32,
        rng: &mut impl Rng,
    ) -> Self {
        let w_bound = gain * (3.0 / fan_in as f32).sqrt();
        let b_bound = 1.0 / (fan_in as f32).sqrt();
        let w: Vec<f32> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-w_bound..w_bound))
            .collect();
        let b: Vec<f32> = (0..fan_out)
            .map(|_| rng.gen_range(-b_bound..b_bound))
            .collect();
        let weight = params.push(
            format!("{name}.weight"),
            Tensor::new(vec![fan_in, fan_out], w).expect("weight shape"),
        );
        let bias = params.push(
            format!("{name}.bias"),
            Tensor::new(vec![fan_out], b).expect("bias shape"),
        );
        Self { weight, bias }
    }

    /// Looks up an existing layer by name.
    pub fn find(params: &ParamSet, name: &str) -> Option<Self> {
        Some(Self {
            weight: params.find(&format!("{name}.weight"))?,
            bias: params.find(&format!("{name}.bias"))?,
        })
    }

    pub fn fan_in(&self, params: &ParamSet) -> usize {
        params.value(self.weight).shape()[0]
    }

    pub fn fan_out(&self, params: &ParamSet) -> usize {
        params.value(self.weight).shape()[1]
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let xw = tape.matmul(x, bound.var(self.weight))?;
        tape.add(xw, bound.var(self.bias))
    }
}
