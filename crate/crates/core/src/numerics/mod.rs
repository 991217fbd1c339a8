//! Dense linear algebra, deterministic RNG, reverse-mode autodiff and
//! finite-difference oracles.

mod fdiff;
mod matrix;
mod rng;
mod tape;

pub use fdiff::{finite_diff_grad, finite_diff_jacobian};
pub use matrix::{add, axpy, dot, norm, scale, sub, Matrix};
pub use rng::RngState;
pub use tape::{Grads, Tape, Var};

/// Abramowitz-Stegun 7.1.26 rational approximation of erf, accurate to
/// about 1.5e-7. Enough for mixture CDFs and quantile bookkeeping.
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}
