//! Closed-form cell-boundary moments of the translated-grid model, the
//! equivalent triangular kernel, and its exact bias integral.
//!
//! With `g(x) = k min{x, 1-x, 1/k}`, the face distances `(alpha, beta)` at a
//! point `x` have polynomial moments in `g`. In the interior (`g = 1`) the
//! law is `(alpha, beta) = ((1-V)/k, V/k)` with `V` uniform; at the borders
//! one face sticks to the domain boundary with the complementary
//! probability, which produces the `g`-polynomials below.

use crate::error::{Error, Result};
use crate::functions::RegressionFn;
use super::{MomentSet, MomentValue};
use std::f64::consts::PI;

fn check(k: usize, x: f64) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::Parameter("toy moments need k >= 2".into()));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Parameter(format!("x = {x} outside [0,1]")));
    }
    let kf = k as f64;
    Ok((kf, kf * x.min(1.0 - x).min(1.0 / kf)))
}

/// All boundary-distance moments at `x` for the toy model with `k` splits.
pub fn toy_moments(k: usize, x: f64) -> Result<MomentSet> {
    let (kf, g) = check(k, x)?;
    let prod = g / kf.powi(2) * (0.5 - 0.5 * g + g * g / 6.0);
    let sum_sq = (-2.0 * g.powi(3) + 3.0 * g * g + 1.0) / (3.0 * kf * kf);
    let sum_cube = (1.0 + 4.0 * g.powi(3) - 3.0 * g.powi(4)) / (4.0 * kf.powi(3));
    let sum_quartic = (1.0 + 5.0 * g.powi(4) - 4.0 * g.powi(5)) / (5.0 * kf.powi(4));
    let mean_alpha = moment_alpha(k, x, 1)?;
    let mean_beta = moment_beta(k, x, 1)?;
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

/// `E[alpha^kappa]` for any `kappa >= 1`.
///
/// Interior value is `1/((kappa+1) k^kappa)`; on the left border the face
/// sticks to 0 and the moment shrinks by the factor
/// `g^kappa (kappa + 1 - kappa g) `.
pub fn moment_alpha(k: usize, x: f64, kappa: u32) -> Result<f64> {
    let (kf, g) = check(k, x)?;
    let kap = kappa as f64;
    let interior = 1.0 / ((kap + 1.0) * kf.powi(kappa as i32));
    if x < 1.0 / kf {
        Ok((g.powi(kappa as i32) * (kap + 1.0 - kap * g)) * interior)
    } else {
        // Right border leaves the alpha-face moments at the interior value.
        Ok(interior)
    }
}

/// `E[beta^kappa]`; mirror image of [`moment_alpha`].
pub fn moment_beta(k: usize, x: f64, kappa: u32) -> Result<f64> {
    moment_alpha(k, 1.0 - x, kappa)
}

/// `E[alpha^kappa + beta^kappa]`.
pub fn moment_sum(k: usize, x: f64, kappa: u32) -> Result<f64> {
    Ok(moment_alpha(k, x, kappa)? + moment_beta(k, x, kappa)?)
}

/// The triangular kernel of height `k` and support `[-1/k, 1/k]` to which
/// the infinite-forest smoothing is equivalent at interior points.
pub fn toy_kernel(k: usize, u: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Parameter("toy kernel needs k >= 2".into()));
    }
    let kf = k as f64;
    Ok(if u.abs() >= 1.0 / kf { 0.0 } else { kf * (1.0 - kf * u.abs()) })
}

/// Exact convolution `int_0^1 s(t) h(t - x) dt` of a one-dimensional target
/// with the triangular kernel, for interior `x` where the kernel support
/// stays inside the domain.
pub fn kernel_bias_integral(f: &RegressionFn, k: usize, x: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::Parameter("kernel integral needs k >= 2".into()));
    }
    let kf = k as f64;
    let a = 1.0 / kf;
    if !(a..=1.0 - a).contains(&x) {
        return Err(Error::OutOfDomain { coord: 0, value: x });
    }
    match f {
        RegressionFn::Sinusoidal => {
            // The even part of the kernel contracts the sine amplitude by
            // k^2 (1 - cos(2 pi / k)) / (2 pi^2).
            let factor = kf * kf * (1.0 - (2.0 * PI / kf).cos()) / (2.0 * PI * PI);
            Ok((2.0 * PI * x).sin() * factor)
        }
        RegressionFn::Sum { dim: 1 } => Ok(x),
        RegressionFn::AbsoluteValue => Ok(abs_kernel_integral(kf, x)),
        other => Err(Error::Unsupported(format!(
            "kernel integral is one-dimensional; got {}",
            other.name()
        ))),
    }
}

/// `int |u - delta| k (1 - k|u|) du` over `[-1/k, 1/k]` with `delta = 1/2 - x`,
/// split at the kinks of both factors.
fn abs_kernel_integral(kf: f64, x: f64) -> f64 {
    let a = 1.0 / kf;
    let delta = 0.5 - x;
    if delta.abs() >= a {
        // Affine region: a symmetric unit-mass kernel reproduces s(x).
        return (x - 0.5).abs();
    }
    let mut knots = vec![-a, 0.0, delta, a];
    knots.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut acc = 0.0;
    for w in knots.windows(2) {
        let (u0, u1) = (w[0], w[1]);
        if u1 <= u0 {
            continue;
        }
        let mid = 0.5 * (u0 + u1);
        let s_abs = (mid - delta).signum();
        let s_ker = mid.signum();
        // integrand = s_abs (u - delta) kf (1 - kf s_ker u)
        //           = s_abs kf [ -kf s_ker u^2 + (1 + kf s_ker delta) u - delta ]
        let c2 = -kf * s_ker;
        let c1 = 1.0 + kf * s_ker * delta;
        let c0 = -delta;
        let anti = |u: f64| c2 * u.powi(3) / 3.0 + c1 * u * u / 2.0 + c0 * u;
        acc += s_abs * kf * (anti(u1) - anti(u0));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gl16_composite;

    #[test]
    fn interior_moments() {
        let ms = toy_moments(10, 0.5).unwrap();
        assert!((ms.prod[0] - 1.0 / 600.0).abs() < 1e-15);
        assert!(ms.diff(0).abs() < 1e-15);
        assert!((ms.sum_sq[0] - 2.0 / 300.0).abs() < 1e-15);
        assert!((ms.sum_quartic[0] - 2.0 / 50_000.0).abs() < 1e-18);
        assert!((ms.sum_cube[0].value() - 2.0 / 4000.0).abs() < 1e-17);
    }

    #[test]
    fn border_moments_at_zero() {
        let ms = toy_moments(10, 0.0).unwrap();
        assert_eq!(ms.prod[0], 0.0);
        assert!((ms.sum_sq[0] - 1.0 / 300.0).abs() < 1e-15);
        // alpha = 0 a.s.: E[alpha - beta] = -E[beta] = -1/(2k).
        assert!((ms.diff(0) + 0.05).abs() < 1e-15);
        assert_eq!(ms.mean_alpha.as_ref().unwrap()[0], 0.0);
        // beta ~ width of the first cell ~ U(0, 1/k]: E[beta^3] = 1/(4 k^3).
        assert!((ms.sum_cube[0].value() - 0.25e-3).abs() < 1e-15);
    }

    #[test]
    fn moments_match_shift_integration_oracle() {
        // Brute-force oracle: integrate over the translation T on a fine
        // midpoint grid, reading (alpha, beta) off the sampled partition.
        let k = 10;
        let n = 200_000;
        for &x in &[0.03, 0.08, 0.37, 0.5, 0.95, 0.999] {
            let (mut prod, mut diff, mut s2, mut s3, mut s4, mut ma) =
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                let p = crate::models::toy_partition_with_shift(k, t).unwrap();
                let b = p.cell_bounds_at(&[x]).unwrap()[0];
                let (al, be) = b;
                prod += al * be;
                diff += al - be;
                s2 += al * al + be * be;
                s3 += al.powi(3) + be.powi(3);
                s4 += al.powi(4) + be.powi(4);
                ma += al;
            }
            let nf = n as f64;
            let ms = toy_moments(k, x).unwrap();
            assert!((prod / nf - ms.prod[0]).abs() < 1e-7, "prod at x={x}");
            assert!((diff / nf - ms.diff(0)).abs() < 1e-7, "diff at x={x}");
            assert!((s2 / nf - ms.sum_sq[0]).abs() < 1e-7, "sum_sq at x={x}");
            assert!((s3 / nf - ms.sum_cube[0].value()).abs() < 1e-8, "sum_cube at x={x}");
            assert!((s4 / nf - ms.sum_quartic[0]).abs() < 1e-8, "sum_quartic at x={x}");
            assert!(
                (ma / nf - ms.mean_alpha.as_ref().unwrap()[0]).abs() < 1e-7,
                "mean_alpha at x={x}"
            );
        }
    }

    #[test]
    fn kernel_shape() {
        assert_eq!(toy_kernel(128, 0.0).unwrap(), 128.0);
        assert_eq!(toy_kernel(128, 1.0 / 128.0).unwrap(), 0.0);
        assert_eq!(toy_kernel(128, -0.5).unwrap(), 0.0);
        // Unit mass for several k.
        for k in [2usize, 5, 32] {
            let a = 1.0 / k as f64;
            let mass = gl16_composite(-a, a, 4, |u| toy_kernel(k, u).unwrap());
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_integral_examples() {
        // Linear targets are reproduced exactly.
        let f = RegressionFn::Sum { dim: 1 };
        for &x in &[0.2, 0.5, 0.83] {
            assert!((kernel_bias_integral(&f, 16, x).unwrap() - x).abs() < 1e-13);
        }
        // Quadrature cross-check: integrate between the kinks of both
        // factors so each panel sees a smooth integrand.
        for f in [RegressionFn::Sinusoidal, RegressionFn::AbsoluteValue] {
            for &x in &[0.2, 0.493, 0.5, 0.51, 0.75] {
                let k = 16;
                let a = 1.0 / k as f64;
                let mut knots = vec![x - a, x, 0.5, x + a];
                knots.sort_by(|p, q| p.partial_cmp(q).unwrap());
                knots.retain(|&t| t >= x - a && t <= x + a);
                let mut direct = 0.0;
                for w in knots.windows(2) {
                    direct += gl16_composite(w[0], w[1], 4, |t| {
                        f.eval(&[t]).unwrap() * toy_kernel(k, t - x).unwrap()
                    });
                }
                let exact = kernel_bias_integral(&f, k, x).unwrap();
                assert!((exact - direct).abs() < 1e-10, "{} at x={x}", f.name());
            }
        }
    }

    #[test]
    fn kernel_integral_rejects_border() {
        let f = RegressionFn::Sinusoidal;
        assert!(kernel_bias_integral(&f, 16, 0.01).is_err());
        assert!(kernel_bias_integral(&f, 16, 0.999).is_err());
    }
}
