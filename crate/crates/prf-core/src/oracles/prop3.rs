//! Pointwise bias/variance quantities assembled from boundary-distance
//! moments and target derivatives, with the two-sided bands they generate
//! for the infinite-forest bias and the tree-variance term.

use crate::error::{Error, Result};
use crate::functions::RegressionFn;
use super::MomentSet;

/// The moment/derivative contractions controlling the pointwise expansion
/// of the projection error:
///
/// - `m1`: first-order mean term (gradient times face-distance asymmetry);
/// - `m2`: second-order mean term (needs second derivatives);
/// - `n2`: second-moment term whose excess over `m1^2` is the tree variance;
/// - `r2`, `r3`, `r4`: remainder radii built from the C2/C3 constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop3Quantities {
    pub m1: f64,
    pub m2: Option<f64>,
    pub n2: f64,
    pub r2: f64,
    pub r3: Option<f64>,
    /// True when `r3` is built from an upper-bounded third moment (the
    /// balanced recursive model); the H3 band stays valid either way.
    pub r3_is_bound: bool,
    pub r4: f64,
}

pub fn prop3_quantities(
    moments: &MomentSet,
    f: &RegressionFn,
    x: &[f64],
) -> Result<Prop3Quantities> {
    let d = moments.dim;
    if f.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: f.dim() });
    }
    let c2 = f.c2().ok_or_else(|| {
        Error::BoundsUnavailable(format!("{} carries no C2 constant", f.name()))
    })?;
    let grad = f.gradient(x)?;

    let mut m1 = 0.0;
    let mut n2 = 0.0;
    let mut r2 = 0.0;
    let mut r4 = 0.0;
    for i in 0..d {
        let diff_ba = -moments.diff_ab[i];
        m1 += 0.5 * grad[i] * diff_ba;
        n2 += 0.25 * grad[i] * grad[i] * (moments.sum_sq[i] - 2.0 * moments.prod[i]);
        r2 += c2 / 3.0 * (moments.sum_sq[i] - moments.prod[i]);
        r4 += 2.0 * d as f64 * c2 * c2 / 9.0 * moments.sum_quartic[i];
    }
    for i in 0..d {
        for j in 0..d {
            if i != j {
                n2 += 0.25 * grad[i] * grad[j] * moments.cross_diff[i * d + j];
            }
        }
    }

    let m2 = match f.second_derivs(x) {
        Ok(h) => {
            let mut acc = 0.0;
            for i in 0..d {
                acc += h[i][i] / 6.0 * (moments.sum_sq[i] - moments.prod[i]);
                for j in 0..d {
                    if i != j {
                        acc += h[i][j] / 8.0 * moments.cross_diff[i * d + j];
                    }
                }
            }
            Some(acc)
        }
        Err(_) => None,
    };

    let (r3, r3_is_bound) = match f.c3() {
        Some(c3) => {
            let sum: f64 = moments.sum_cube.iter().map(|m| m.value()).sum();
            let is_bound = moments.sum_cube.iter().any(|m| !m.is_exact());
            (Some(c3 / 4.0 * sum), is_bound)
        }
        None => (None, false),
    };

    Ok(Prop3Quantities { m1, m2, n2, r2, r3, r3_is_bound, r4 })
}

/// Two-sided enclosures derived from the quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVarBands {
    /// `[m1^2 - 2|m1| r2, (|m1| + r2)^2]` encloses the pointwise squared
    /// bias of the infinite forest.
    pub bias_h2: (f64, f64),
    /// The tree variance lies within `var_radius` of `var_center`.
    pub var_center: f64,
    pub var_radius: f64,
    /// Sharper squared-bias enclosure `(center, radius)` available with a
    /// C3 constant.
    pub bias_h3: Option<(f64, f64)>,
}

pub fn bias_bands(q: &Prop3Quantities) -> BiasVarBands {
    let var_center = q.n2 - q.m1 * q.m1;
    let var_radius = 2.0 * (q.r4 * var_center.max(0.0)).sqrt() + q.r4;
    let bias_h3 = match (q.m2, q.r3) {
        (Some(m2), Some(r3)) => {
            let center = (q.m1 + m2) * (q.m1 + m2);
            Some((center, 2.0 * (r3 * (q.m1 + m2)).abs() + r3 * r3))
        }
        _ => None,
    };
    BiasVarBands {
        bias_h2: (
            q.m1 * q.m1 - 2.0 * q.m1.abs() * q.r2,
            (q.m1.abs() + q.r2) * (q.m1.abs() + q.r2),
        ),
        var_center,
        var_radius,
        bias_h3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{toy_moments, purf_moments, bprf_moments};
    use std::f64::consts::PI;

    #[test]
    fn toy_interior_m1_vanishes() {
        let ms = toy_moments(10, 0.5).unwrap();
        for f in [RegressionFn::Sinusoidal, RegressionFn::Sum { dim: 1 }] {
            let q = prop3_quantities(&ms, &f, &[0.5]).unwrap();
            assert!(q.m1.abs() < 1e-15);
        }
    }

    #[test]
    fn toy_interior_n2_example() {
        // N2 = (s'(x))^2 / (12 k^2) in the interior: pi^2/300 at k=10, x=1/2.
        let ms = toy_moments(10, 0.5).unwrap();
        let q = prop3_quantities(&ms, &RegressionFn::Sinusoidal, &[0.5]).unwrap();
        assert!((q.n2 - PI * PI / 300.0).abs() < 1e-12, "{}", q.n2);
    }

    #[test]
    fn linear_target_pins_bias_to_m1_squared() {
        // C2 = 0 collapses the H2 band to the single point m1^2.
        let ms = purf_moments(8, 0.9).unwrap();
        let q = prop3_quantities(&ms, &RegressionFn::Sum { dim: 1 }, &[0.9]).unwrap();
        assert_eq!(q.r2, 0.0);
        let bands = bias_bands(&q);
        assert!((bands.bias_h2.0 - bands.bias_h2.1).abs() < 1e-18);
        assert!((bands.bias_h2.0 - q.m1 * q.m1).abs() < 1e-18);
    }

    #[test]
    fn variance_center_is_nonnegative() {
        for &x in &[0.02, 0.3, 0.5, 0.77] {
            let ms = toy_moments(16, x).unwrap();
            let q = prop3_quantities(&ms, &RegressionFn::Sinusoidal, &[x]).unwrap();
            assert!(q.n2 - q.m1 * q.m1 >= -1e-15, "at x={x}");
            let ms = purf_moments(16, x).unwrap();
            let q = prop3_quantities(&ms, &RegressionFn::Sinusoidal, &[x]).unwrap();
            assert!(q.n2 - q.m1 * q.m1 >= -1e-15, "purf at x={x}");
        }
    }

    #[test]
    fn abs_target_is_refused() {
        let ms = toy_moments(10, 0.3).unwrap();
        assert!(matches!(
            prop3_quantities(&ms, &RegressionFn::AbsoluteValue, &[0.3]),
            Err(Error::BoundsUnavailable(_))
        ));
    }

    #[test]
    fn bprf_r3_is_flagged_as_bound() {
        let ms = bprf_moments(3, 2, &[0.4, 0.6]).unwrap();
        let q = prop3_quantities(&ms, &RegressionFn::Sum { dim: 2 }, &[0.4, 0.6]).unwrap();
        assert!(q.r3_is_bound);
        assert!(q.r3.unwrap() >= 0.0);
    }
}
