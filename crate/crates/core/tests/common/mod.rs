//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

/// Returns `Err(message)` from the enclosing function when `cond` is false.
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub mod gradcheck;
pub mod invariants;
pub mod oracles;
