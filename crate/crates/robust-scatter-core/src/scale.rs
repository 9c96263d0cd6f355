//! Univariate tau-scale estimate.
//!
//! The estimate starts from the raw median absolute deviation `s0`, computes a
//! bisquare-weighted location with tuning constant `c1`, and then averages the
//! truncated squared residuals `min(((x - m) / s0)^2, c2^2)`. Dividing by
//! [`TAU_CONSISTENCY`] makes the result equal to `sigma` at the normal model.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::median_in_place;

pub const TAU_C1: f64 = 4.5;
pub const TAU_C2: f64 = 3.0;

/// `E[min(Z^2, (c2 * q)^2)]` for `Z ~ N(0, 1)` and `q = Phi^{-1}(3/4)`, the
/// population value of the uncorrected squared tau-scale. Evaluated once in
/// closed form as `(2 Phi(c) - 1) - 2 c phi(c) + 2 c^2 (1 - Phi(c))` with
/// `c = 3 q`, and checked against quadrature in the tests.
pub const TAU_CONSISTENCY: f64 = 0.924_715_392_176_130_84;

/// Returns `(location, scale)`; the scale is `None` when the MAD vanishes.
pub fn tau_location_scale(x: &[f64]) -> (f64, Option<f64>) {
    let mut buf: Vec<f64> = x.to_vec();
    let med = median_in_place(&mut buf);
    for (b, v) in buf.iter_mut().zip(x) {
        *b = (v - med).abs();
    }
    let s0 = median_in_place(&mut buf);
    if !(s0 > 0.0) {
        return (med, None);
    }

    let (mut sw, mut swx) = (0.0, 0.0);
    for &v in x {
        let r = (v - med) / (TAU_C1 * s0);
        if r.abs() <= 1.0 {
            let w = (1.0 - r * r) * (1.0 - r * r);
            sw += w;
            swx += w * v;
        }
    }
    let loc = swx / sw;

    let c2sq = TAU_C2 * TAU_C2;
    let mean_rho = x
        .iter()
        .map(|v| {
            let r = (v - loc) / s0;
            (r * r).min(c2sq)
        })
        .sum::<f64>()
        / x.len() as f64;
    let scale = s0 * (mean_rho / TAU_CONSISTENCY).sqrt();
    (loc, Some(scale))
}

pub fn tau_scale(x: &[f64]) -> Option<f64> {
    tau_location_scale(x).1
}
