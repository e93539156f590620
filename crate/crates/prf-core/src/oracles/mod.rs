//! Closed-form ground truth the Monte Carlo engines are tested against:
//! boundary-distance moments per model, pointwise bias/variance quantities,
//! integrated theoretical predictions and rate exponents.

pub mod bprf;
pub mod prop3;
pub mod purf;
pub mod toy;

pub use bprf::{bprf_geometry, bprf_moments, geometric_recursion, BprfGeometry, KAPPA};
pub use prop3::{bias_bands, prop3_quantities, BiasVarBands, Prop3Quantities};
pub use purf::purf_moments;
pub use toy::{kernel_bias_integral, toy_kernel, toy_moments};

use crate::error::{Error, Result};
use crate::functions::RegressionFn;
use crate::models::ModelSpec;
use crate::quad::gl16_composite;

/// An exact moment, or an upper bound where the model admits no closed form
/// (the third absolute moments of the balanced recursive model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentValue {
    Exact(f64),
    UpperBound(f64),
}

impl MomentValue {
    pub fn value(&self) -> f64 {
        match *self {
            MomentValue::Exact(v) | MomentValue::UpperBound(v) => v,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, MomentValue::Exact(_))
    }
}

/// Boundary-distance moments of the cell containing a fixed point: per
/// coordinate the mean asymmetry `E[alpha_i - beta_i]` of `alpha_i = x_i -
/// A_i` and `beta_i = B_i - x_i`, the product `E[alpha_i beta_i]`, the
/// power sums `E[alpha_i^K + beta_i^K]` for K = 2, 3, 4, and the cross
/// products `E[(beta_i - alpha_i)(beta_j - alpha_j)]` for distinct
/// coordinates.
///
/// Individual means are carried where the model's law factorizes enough to
/// give them (translated grid and order statistics); the balanced
/// recursive model closes only the combinations above, because the
/// containing cell is size-biased.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub dim: usize,
    pub diff_ab: Vec<f64>,
    pub mean_alpha: Option<Vec<f64>>,
    pub mean_beta: Option<Vec<f64>>,
    pub prod: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub sum_cube: Vec<MomentValue>,
    pub sum_quartic: Vec<f64>,
    /// Row-major `dim x dim`; diagonal entries are unused zeros.
    pub cross_diff: Vec<f64>,
}

impl MomentSet {
    /// `E[alpha_i - beta_i]`.
    pub fn diff(&self, i: usize) -> f64 {
        self.diff_ab[i]
    }

    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.dim {
            if self.prod[i] < 0.0
                || self.sum_sq[i] < 0.0
                || self.sum_quartic[i] < 0.0
                || self.sum_cube[i].value() < 0.0
            {
                return Err(Error::Invariant(format!("negative even/product moment at {i}")));
            }
        }
        Ok(())
    }
}

/// Closed-form moments for the models that have them.
pub fn moments_for(spec: &ModelSpec, x: &[f64]) -> Result<MomentSet> {
    match spec {
        ModelSpec::Toy { k } => {
            if x.len() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: x.len() });
            }
            toy_moments(*k, x[0])
        }
        ModelSpec::Purf { k } => {
            if x.len() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: x.len() });
            }
            purf_moments(*k, x[0])
        }
        ModelSpec::Bprf { depth, dim } => bprf_moments(*depth, *dim, x),
        other => Err(Error::Unsupported(format!(
            "no closed-form moments for the {} model",
            other.name()
        ))),
    }
}

/// Bias rate exponent of the balanced recursive model,
/// `alpha = -log2(1 - 1/(2d)) > 0`: trees decay like `k^-alpha` and
/// infinite forests like `k^-2alpha` in the leaf count `k = 2^p`.
pub fn alpha_urt(d: usize) -> f64 {
    -(1.0 - 0.5 / d as f64).log2()
}

/// Companion exponent `-log2(2 (1 - 2/(3d)))` governing the expected sum of
/// squared cell diameters in the variance bounds.
pub fn beta_urt(d: usize) -> f64 {
    -(2.0 * (1.0 - 2.0 / (3.0 * d as f64))).log2()
}

/// Theoretical log2-log2 slopes of integrated bias against leaf count.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateExponents {
    pub tree: f64,
    pub forest: f64,
    pub forest_borderless: Option<f64>,
    /// `beta_urt`, only meaningful for the balanced recursive model.
    pub variance_exponent: Option<f64>,
}

pub fn rate_exponents(spec: &ModelSpec) -> Result<RateExponents> {
    match spec {
        ModelSpec::Toy { .. } | ModelSpec::Purf { .. } => Ok(RateExponents {
            tree: -2.0,
            forest: -3.0,
            forest_borderless: Some(-4.0),
            variance_exponent: None,
        }),
        ModelSpec::Bprf { dim, .. } => {
            let a = alpha_urt(*dim);
            Ok(RateExponents {
                tree: -a,
                forest: -2.0 * a,
                forest_borderless: None,
                variance_exponent: Some(beta_urt(*dim)),
            })
        }
        other => Err(Error::Unsupported(format!(
            "no theoretical exponent for the {} model",
            other.name()
        ))),
    }
}

/// Which integrated quantity a theoretical prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasTarget {
    /// Integrated squared bias of the infinite forest.
    InfiniteForest,
    /// Integrated variance of a single tree's projection.
    TreeVariance,
}

/// Leading-order prediction with a validity band. When only a C2 constant
/// is available the center degenerates to an upper bound and
/// `exact_center` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalBias {
    pub prediction: f64,
    pub lower: f64,
    pub upper: f64,
    pub exact_center: bool,
}

impl TheoreticalBias {
    fn centered(center: f64, radius: f64) -> Self {
        TheoreticalBias {
            prediction: center,
            lower: (center - radius).max(0.0),
            upper: center + radius,
            exact_center: true,
        }
    }

    fn upper_only(upper: f64) -> Self {
        TheoreticalBias { prediction: upper, lower: 0.0, upper, exact_center: false }
    }
}

/// Integrated leading-order bias/variance predictions per model.
pub fn theoretical_bias(
    spec: &ModelSpec,
    f: &RegressionFn,
    target: BiasTarget,
    borderless: bool,
) -> Result<TheoreticalBias> {
    if f.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: f.dim() });
    }
    let c2 = f.c2().ok_or_else(|| {
        Error::BoundsUnavailable(format!("{} carries no C2 constant", f.name()))
    })?;
    match spec {
        ModelSpec::Toy { k } => toy_prediction(*k, f, c2, target, borderless),
        ModelSpec::Purf { k } => purf_prediction(*k, f, c2, target, borderless),
        ModelSpec::Bprf { depth, dim } => {
            if borderless {
                return Err(Error::Unsupported(
                    "the balanced recursive model has no border region".into(),
                ));
            }
            bprf_prediction(*depth, *dim, f, c2, target)
        }
        other => Err(Error::Unsupported(format!(
            "no theoretical bias for the {} model",
            other.name()
        ))),
    }
}

fn toy_prediction(
    k: usize,
    f: &RegressionFn,
    c2: f64,
    target: BiasTarget,
    borderless: bool,
) -> Result<TheoreticalBias> {
    let kf = k as f64;
    let s1 = f.sup_norm_deriv()?;
    match target {
        BiasTarget::TreeVariance => {
            let center = f.integral_sq_deriv()? / (12.0 * kf * kf);
            let radius = (2.0 * s1 * c2 + c2 * c2 + 3.0 * s1 * s1) / kf.powi(3);
            Ok(TheoreticalBias::centered(center, radius))
        }
        BiasTarget::InfiniteForest => match f.c3() {
            Some(c3) => {
                let s2 = f.sup_norm_second()?;
                if borderless {
                    let eps = 1.0 / kf;
                    let center = f.integral_sq_second_interior(eps)? / (144.0 * kf.powi(4));
                    let radius = 3.0 * c3 * (s2 + 1.5 * c3) / (4.0 * kf.powi(5));
                    Ok(TheoreticalBias::centered(center, radius))
                } else {
                    // Border strips dominate: quadrature of the exact
                    // leading border integrand.
                    let border = gl16_composite(0.0, 1.0 / kf, 4, |x| {
                        let a = f.gradient(&[x]).unwrap()[0];
                        let b = f.gradient(&[1.0 - x]).unwrap()[0];
                        (a * a + b * b) * (1.0 - kf * x).powi(4)
                    });
                    let center = border / (16.0 * kf * kf);
                    let radius =
                        (s1 * s2 + 2.0 * c3 * s1 + s2 * s2 + 2.0 * c3 * s2 + 4.0 * c3 * c3)
                            / (2.0 * kf.powi(4));
                    Ok(TheoreticalBias::centered(center, radius))
                }
            }
            None => {
                if borderless {
                    Ok(TheoreticalBias::upper_only(c2 * c2 / (36.0 * kf.powi(4))))
                } else {
                    Ok(TheoreticalBias::upper_only(
                        s1 * s1 / (8.0 * kf.powi(3)) + (c2 * s1 + 2.0 * c2 * c2) / kf.powi(4),
                    ))
                }
            }
        },
    }
}

fn purf_prediction(
    k: usize,
    f: &RegressionFn,
    c2: f64,
    target: BiasTarget,
    borderless: bool,
) -> Result<TheoreticalBias> {
    if k < 27 {
        return Err(Error::Parameter("integrated purf predictions need k >= 27".into()));
    }
    let kf = k as f64;
    let s1 = f.sup_norm_deriv()?;
    match target {
        BiasTarget::TreeVariance => {
            let center = f.integral_sq_deriv()? / (2.0 * kf * kf);
            let radius = 6.0 * ((kf.ln() + 1.0) * s1 * s1 + c2 * c2) / kf.powi(3);
            Ok(TheoreticalBias::centered(center, radius))
        }
        BiasTarget::InfiniteForest => match f.c3() {
            Some(c3) => {
                let s2 = f.sup_norm_second()?;
                if borderless {
                    let center = f.integral_sq_second()? / (4.0 * kf.powi(4));
                    let radius = (3.0 * c3 + s1 / 729.0 + 2.0 * s2).powi(2) / kf.powi(5);
                    Ok(TheoreticalBias::centered(center, radius))
                } else {
                    let d0 = f.gradient(&[0.0])?[0];
                    let d1 = f.gradient(&[1.0 - 1e-12])?[0];
                    let center = (d0 * d0 + d1 * d1) / (8.0 * kf.powi(3));
                    let radius = 6.0 * (c3 + s1 + s2).powi(2) * kf.ln() / kf.powi(4);
                    Ok(TheoreticalBias::centered(center, radius))
                }
            }
            None => {
                if borderless {
                    Ok(TheoreticalBias::upper_only(
                        2.0 * c2 * c2 / kf.powi(4) + s1 * s1 / (2.0 * kf.powi(6)),
                    ))
                } else {
                    Ok(TheoreticalBias::upper_only(
                        4.0 * s1 * s1 * kf.ln() / kf.powi(3) + 2.0 * c2 * c2 / kf.powi(4),
                    ))
                }
            }
        },
    }
}

fn bprf_prediction(
    p: usize,
    d: usize,
    f: &RegressionFn,
    c2: f64,
    target: BiasTarget,
) -> Result<TheoreticalBias> {
    let df = d as f64;
    let shrink = 1.0 - 0.5 / df;
    let diam_rate = 1.0 - 2.0 / (3.0 * df);
    match target {
        BiasTarget::TreeVariance => {
            let center = 0.5 * shrink.powi(p as i32) * f.integral_vtree_weight()?;
            let radius = 0.25 * df * f.grad_sup_norm().powi(2) * shrink.powi(2 * p as i32)
                + (df * f.sup_grad_component_sq()
                    + df * df * f.sup_cross_second()
                    + 5.0 * df * c2 * c2)
                    * (shrink.powi(p as i32) * diam_rate.powi(p as i32)).sqrt();
            Ok(TheoreticalBias::centered(center, radius))
        }
        BiasTarget::InfiniteForest => match (f.c3(), f.integral_bprf_h3_center()) {
            (Some(c3), Ok(center_int)) => {
                let center = 0.25 * shrink.powi(2 * p as i32) * center_int;
                let hess_sq = f
                    .sup_hessian_entry_abs()
                    .ok_or_else(|| {
                        Error::BoundsUnavailable(format!(
                            "{} carries no Hessian sup entry",
                            f.name()
                        ))
                    })?
                    .powi(2);
                let radius = 6.0
                    * df.powi(4)
                    * diam_rate.powf(0.75 * p as f64)
                    * shrink.powi(p as i32)
                    * (f.grad_sup_norm().powi(2) + hess_sq + c3 * c3);
                Ok(TheoreticalBias::centered(center, radius))
            }
            _ => Ok(TheoreticalBias::upper_only(
                shrink.powi(2 * p as i32)
                    * (0.5 * f.integral_grad_dot_sq()? + 2.0 * df * df * c2 * c2),
            )),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exponents_match_model_dimensions() {
        let toy = rate_exponents(&ModelSpec::Toy { k: 32 }).unwrap();
        assert_eq!(toy.tree, -2.0);
        assert_eq!(toy.forest_borderless, Some(-4.0));

        let b1 = rate_exponents(&ModelSpec::Bprf { depth: 5, dim: 1 }).unwrap();
        assert!((b1.tree + 1.0).abs() < 1e-12);
        assert!((b1.forest + 2.0).abs() < 1e-12);

        let b5 = rate_exponents(&ModelSpec::Bprf { depth: 5, dim: 5 }).unwrap();
        assert!((b5.tree + 0.152).abs() < 5e-4);
        let b10 = rate_exponents(&ModelSpec::Bprf { depth: 5, dim: 10 }).unwrap();
        assert!((b10.tree + 0.074).abs() < 5e-4);

        assert!(rate_exponents(&ModelSpec::Holdout {
            leaves: 8,
            dim: 2,
            n_prime: 64,
            sigma: 0.25,
            mtry: None
        })
        .is_err());
    }

    #[test]
    fn beta_urt_sign_flips_with_dimension() {
        assert!(beta_urt(1) > 0.0);
        assert!(beta_urt(2) < 0.0);
    }

    #[test]
    fn toy_borderless_prediction() {
        // 8 pi^4 / (144 k^4) up to the border trim of the integral.
        let t = theoretical_bias(
            &ModelSpec::Toy { k: 128 },
            &RegressionFn::Sinusoidal,
            BiasTarget::InfiniteForest,
            true,
        )
        .unwrap();
        let full = 8.0 * PI.powi(4) / (144.0 * 128f64.powi(4));
        assert!((t.prediction - full).abs() / full < 1e-4);
        assert!(t.exact_center);
    }

    #[test]
    fn purf_tree_variance_prediction() {
        // Leading term int (s')^2 / (2 k^2) = pi^2 / k^2 for the sinusoid.
        let t = theoretical_bias(
            &ModelSpec::Purf { k: 128 },
            &RegressionFn::Sinusoidal,
            BiasTarget::TreeVariance,
            false,
        )
        .unwrap();
        let expect = PI * PI / (128.0 * 128.0);
        assert!((t.prediction - expect).abs() < 1e-12);
    }

    #[test]
    fn bprf_forest_prediction_ratio() {
        // One extra level multiplies the d=1 forest bias by
        // (1 - 1/(2d))^2 = 1/4.
        let f = RegressionFn::Sum { dim: 1 };
        let at = |p| {
            theoretical_bias(
                &ModelSpec::Bprf { depth: p, dim: 1 },
                &f,
                BiasTarget::InfiniteForest,
                false,
            )
            .unwrap()
            .prediction
        };
        assert!((at(6) / at(5) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bprf_sum_predictions_are_exact_constants() {
        // Linear target: the forest center is (1/4) shrink^(2p) int
        // (sum_i (1-2x_i))^2 = (d/12) shrink^(2p).
        let d = 5;
        let p = 6;
        let t = theoretical_bias(
            &ModelSpec::Bprf { depth: p, dim: d },
            &RegressionFn::Sum { dim: d },
            BiasTarget::InfiniteForest,
            false,
        )
        .unwrap();
        let shrink = 0.9f64;
        assert!((t.prediction - (d as f64 / 12.0) * shrink.powi(2 * p as i32)).abs() < 1e-12);
        assert!(t.lower <= t.prediction && t.prediction <= t.upper);
    }

    #[test]
    fn abs_target_is_refused() {
        assert!(matches!(
            theoretical_bias(
                &ModelSpec::Toy { k: 64 },
                &RegressionFn::AbsoluteValue,
                BiasTarget::InfiniteForest,
                false
            ),
            Err(Error::BoundsUnavailable(_))
        ));
    }

    #[test]
    fn moments_dispatch() {
        assert!(moments_for(&ModelSpec::Toy { k: 8 }, &[0.5]).is_ok());
        assert!(moments_for(&ModelSpec::Ubprf { k: 3, dim: 2 }, &[0.5, 0.5]).is_err());
    }
}
