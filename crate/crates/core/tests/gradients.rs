//! Finite-difference checks of every differentiable tape operation.

mod common;

use common::gradcheck::{self, TOLERANCE};
use proptest::prelude::*;

macro_rules! grad_props {
    ($($name:ident => $check:path),* $(,)?) => {
        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            $(
                #[test]
                fn $name(seed in any::<u64>()) {
                    let e = $check(seed);
                    prop_assert!(e < TOLERANCE, "relative error {e}");
                }
            )*
        }
    };
}

grad_props! {
    grad_relu => gradcheck::relu,
    grad_leaky_relu => gradcheck::leaky_relu,
    grad_sigmoid => gradcheck::sigmoid,
    grad_tanh => gradcheck::tanh,
    grad_exp => gradcheck::exp,
    grad_log => gradcheck::log,
    grad_scale => gradcheck::scale,
    grad_clamp => gradcheck::clamp,
    grad_binary => gradcheck::binary,
    grad_matmul => gradcheck::matmul,
    grad_reduce => gradcheck::reduce,
    grad_concat => gradcheck::concat,
    grad_bce => gradcheck::bce,
    grad_mse => gradcheck::mse,
    grad_cross_entropy => gradcheck::cross_entropy,
    grad_kl_composite => gradcheck::kl_composite,
}
