//! Closed-form moments for partitions built from order statistics of k
//! uniforms. The joint survival function of the face distances is
//! `P(alpha >= t, beta >= s) = (1 - t - s)^k` (no breakpoint falls in an
//! interval of length `t + s` around the point), and all moments below are
//! iterated integrals of it.

use crate::error::{Error, Result};
use super::{MomentSet, MomentValue};

fn check(k: usize, x: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::Parameter("purf moments need k >= 1".into()));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("x = {x} outside [0,1]")));
    }
    Ok(k as f64)
}

/// `x^j + (1-x)^j`.
fn p_sym(x: f64, j: i32) -> f64 {
    x.powi(j) + (1.0 - x).powi(j)
}

/// Joint survival `P(alpha >= t, beta >= s)` for `t <= x`, `s <= 1 - x`.
pub fn joint_survival(k: usize, t: f64, s: f64) -> f64 {
    (1.0 - t - s).powi(k as i32)
}

pub fn purf_moments(k: usize, x: f64) -> Result<MomentSet> {
    let n = check(k, x)?;
    let y = 1.0 - x;
    let d2 = (n + 1.0) * (n + 2.0);
    let d3 = d2 * (n + 3.0);
    let d4 = d3 * (n + 4.0);
    let ki = k as i32;

    let prod = (1.0 - p_sym(x, ki + 2)) / d2;
    let sum_sq = 4.0 / d2
        - 2.0 * (y * x.powi(ki + 1) + x * y.powi(ki + 1)) / (n + 1.0)
        - 2.0 * p_sym(x, ki + 2) / d2;
    let sum_cube = 12.0 / d3
        - 3.0 * (y * y * x.powi(ki + 1) + x * x * y.powi(ki + 1)) / (n + 1.0)
        - 6.0 * (y * x.powi(ki + 2) + x * y.powi(ki + 2)) / d2
        - 6.0 * p_sym(x, ki + 3) / d3;
    let sum_quartic = 48.0 / d4
        - 4.0 * (y.powi(3) * x.powi(ki + 1) + x.powi(3) * y.powi(ki + 1)) / (n + 1.0)
        - 12.0 * (y * y * x.powi(ki + 2) + x * x * y.powi(ki + 2)) / d2
        - 24.0 * (y * x.powi(ki + 3) + x * y.powi(ki + 3)) / d3
        - 24.0 * p_sym(x, ki + 4) / d4;

    let mean_alpha = moment_alpha(k, x, 1)?;
    let mean_beta = moment_alpha(k, 1.0 - x, 1)?;
    Ok(MomentSet {
        dim: 1,
        diff_ab: vec![mean_alpha - mean_beta],
        mean_alpha: Some(vec![mean_alpha]),
        mean_beta: Some(vec![mean_beta]),
        prod: vec![prod],
        sum_sq: vec![sum_sq],
        sum_cube: vec![MomentValue::Exact(sum_cube)],
        sum_quartic: vec![sum_quartic],
        cross_diff: vec![0.0],
    })
}

/// `E[alpha^kappa] = kappa int_0^x t^(kappa-1) (1-t)^k dt` via the exact
/// integration-by-parts recursion.
pub fn moment_alpha(k: usize, x: f64, kappa: u32) -> Result<f64> {
    check(k, x)?;
    Ok(kappa as f64 * poly_beta_integral(kappa - 1, k as i32, x))
}

/// `E[beta^kappa]`, by the `x -> 1 - x` symmetry of the construction.
pub fn moment_beta(k: usize, x: f64, kappa: u32) -> Result<f64> {
    moment_alpha(k, 1.0 - x, kappa)
}

/// `int_0^a t^m (1-t)^K dt`, exact.
fn poly_beta_integral(m: u32, big_k: i32, a: f64) -> f64 {
    if m == 0 {
        (1.0 - (1.0 - a).powi(big_k + 1)) / (big_k + 1) as f64
    } else {
        (-a.powi(m as i32) * (1.0 - a).powi(big_k + 1)
            + m as f64 * poly_beta_integral(m - 1, big_k + 1, a))
            / (big_k + 1) as f64
    }
}

/// Sup-norms of the remainder polynomials over the interior
/// `[4 ln(k)/k, 1 - 4 ln(k)/k]`, valid for `k >= 27`: the borderless moments
/// deviate from their leading terms by at most these amounts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorRemainderBounds {
    /// `|E[alpha - beta]| (k+1)` deviation.
    pub diff: f64,
    /// Deviation of `E[alpha beta] (k+1)(k+2)` from 1.
    pub prod: f64,
    pub sum_sq: f64,
    pub sum_cube: f64,
    pub sum_quartic: f64,
}

pub fn interior_remainder_bounds(k: usize) -> Result<InteriorRemainderBounds> {
    if k < 27 {
        return Err(Error::Parameter("interior bounds need k >= 27".into()));
    }
    let n = k as f64;
    Ok(InteriorRemainderBounds {
        diff: n.powi(-4),
        prod: 2.0 * n.powi(-4),
        sum_sq: 11.0 / 9.0 * n.powi(-3),
        sum_cube: n.powi(-2),
        sum_quartic: n.powi(-1),
    })
}
