//! Closed-form moments of the balanced recursive model.
//!
//! At a fixed point, each split round multiplies one face distance of the
//! containing cell by an independent uniform, which turns every moment into
//! a linear recursion with geometric forcing terms. The generic solver
//! below ([`geometric_recursion`]) resolves all of them.

use crate::error::{Error, Result};
use super::{MomentSet, MomentValue};

/// Closed form of `u_{n+1} = a u_n + sum_i b_i c_i^n`:
/// `u_n = a^n (u_0 - sum_i b_i/(c_i - a)) + sum_i b_i/(c_i - a) c_i^n`.
pub fn geometric_recursion(a: f64, forcing: &[(f64, f64)], u0: f64, n: usize) -> Result<f64> {
    let mut homogeneous = u0;
    let mut particular = 0.0;
    for &(b, c) in forcing {
        if c == a {
            return Err(Error::Parameter("resonant forcing term (c == a)".into()));
        }
        let w = b / (c - a);
        homogeneous -= w;
        particular += w * c.powi(n as i32);
    }
    Ok(a.powi(n as i32) * homogeneous + particular)
}

fn check(d: usize, x: &[f64]) -> Result<()> {
    if d < 1 {
        return Err(Error::Parameter("dimension must be >= 1".into()));
    }
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    for (i, &v) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfDomain { coord: i, value: v });
        }
    }
    Ok(())
}

/// `E[(alpha_i beta_i)^delta] = (1 - delta/(d(delta+1)))^p (x(1-x))^delta`.
pub fn moment_prod_power(p: usize, d: usize, xi: f64, delta: u32) -> f64 {
    let df = d as f64;
    let del = delta as f64;
    (1.0 - del / (df * (del + 1.0))).powi(p as i32) * (xi * (1.0 - xi)).powi(delta as i32)
}

/// `E[alpha_i - beta_i] = (1 - 1/(2d))^p (2 x_i - 1)`.
pub fn moment_diff(p: usize, d: usize, xi: f64) -> f64 {
    let df = d as f64;
    (1.0 - 0.5 / df).powi(p as i32) * (2.0 * xi - 1.0)
}

/// `E[alpha_i^2 + beta_i^2]`, from the recursion forced by the product
/// moment.
pub fn moment_sum_sq(p: usize, d: usize, xi: f64) -> f64 {
    let df = d as f64;
    let w = xi * (1.0 - xi);
    geometric_recursion(
        1.0 - 2.0 / (3.0 * df),
        &[(2.0 / (3.0 * df) * w, 1.0 - 0.5 / df)],
        xi * xi + (1.0 - xi) * (1.0 - xi),
        p,
    )
    .expect("non-resonant")
}

/// `E[alpha_i beta_i (alpha_i^2 + beta_i^2)]`, needed as a forcing term of
/// the fourth-moment recursion.
pub fn moment_prod_times_sum_sq(p: usize, d: usize, xi: f64) -> f64 {
    let df = d as f64;
    let w = xi * (1.0 - xi);
    geometric_recursion(
        1.0 - 3.0 / (4.0 * df),
        &[(w * w / (4.0 * df), 1.0 - 2.0 / (3.0 * df))],
        w * (xi * xi + (1.0 - xi) * (1.0 - xi)),
        p,
    )
    .expect("non-resonant")
}

/// `E[alpha_i^4 + beta_i^4]`.
pub fn moment_sum_quartic(p: usize, d: usize, xi: f64) -> f64 {
    let df = d as f64;
    let w = xi * (1.0 - xi);
    let sq = xi * xi + (1.0 - xi) * (1.0 - xi);
    geometric_recursion(
        1.0 - 4.0 / (5.0 * df),
        &[
            (8.0 / (5.0 * df) * w * w, 1.0 - 2.0 / (3.0 * df)),
            (4.0 / (5.0 * df) * (w * sq - 3.0 * w * w), 1.0 - 3.0 / (4.0 * df)),
        ],
        xi.powi(4) + (1.0 - xi).powi(4),
        p,
    )
    .expect("non-resonant")
}

/// Upper bound on `E[alpha_i^3 + beta_i^3]`; no exact closed form exists,
/// so callers must treat it as a bound.
pub fn moment_sum_cube_bound(p: usize, d: usize) -> f64 {
    let df = d as f64;
    2f64.powf(2.5) * (1.0 - 2.0 / (3.0 * df)).powf(0.75 * p as f64)
}

/// `E[(beta_i - alpha_i)(beta_j - alpha_j)] = (1-1/d)^p (2x_i-1)(2x_j-1)`.
pub fn moment_cross_diff(p: usize, d: usize, xi: f64, xj: f64) -> f64 {
    let df = d as f64;
    (1.0 - 1.0 / df).powi(p as i32) * (2.0 * xi - 1.0) * (2.0 * xj - 1.0)
}

pub fn bprf_moments(p: usize, d: usize, x: &[f64]) -> Result<MomentSet> {
    check(d, x)?;
    let mut cross_diff = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            if i != j {
                cross_diff[i * d + j] = moment_cross_diff(p, d, x[i], x[j]);
            }
        }
    }
    Ok(MomentSet {
        dim: d,
        diff_ab: x.iter().map(|&xi| moment_diff(p, d, xi)).collect(),
        // The containing cell is size-biased, so the individual means do
        // not satisfy a closed recursion; only the difference does.
        mean_alpha: None,
        mean_beta: None,
        prod: x.iter().map(|&xi| moment_prod_power(p, d, xi, 1)).collect(),
        sum_sq: x.iter().map(|&xi| moment_sum_sq(p, d, xi)).collect(),
        sum_cube: x
            .iter()
            .map(|_| MomentValue::UpperBound(moment_sum_cube_bound(p, d)))
            .collect(),
        sum_quartic: x.iter().map(|&xi| moment_sum_quartic(p, d, xi)).collect(),
        cross_diff,
    })
}

/// `(1 + 4/e)/5`, the constant bounding the expected fraction of cells of
/// non-negligible volume.
pub const KAPPA: f64 = (1.0 + 4.0 / std::f64::consts::E) / 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BprfGeometry {
    /// `E[sum_cells diam^2] = d 2^p (1 - 2/(3d))^p`.
    ///
    /// The factor `d` is the squared diameter of the unit cube itself.
    pub expected_diam2_sum: f64,
    pub depth: usize,
    pub dim: usize,
    pub n: Option<usize>,
}

impl BprfGeometry {
    /// Bound on `E[sum_cells exp(-n |cell|)]` for any `u > 0`, available
    /// when the sample size `n` was supplied.
    pub fn volume_sum_bound(&self, u: f64) -> Result<f64> {
        let n = self.n.ok_or_else(|| Error::Parameter("volume bound needs n".into()))? as f64;
        if u <= 0.0 {
            return Err(Error::Parameter("u must be positive".into()));
        }
        let p = self.depth as f64;
        let tail = (-n * (-(p + (u * p).sqrt())).exp()).exp();
        Ok(2f64.powi(self.depth as i32) * (1.0 / u + (1.0 - 1.0 / u) * tail))
    }
}

pub fn bprf_geometry(p: usize, d: usize, n: Option<usize>) -> Result<BprfGeometry> {
    if d < 1 {
        return Err(Error::Parameter("dimension must be >= 1".into()));
    }
    let df = d as f64;
    Ok(BprfGeometry {
        expected_diam2_sum: df * 2f64.powi(p as i32) * (1.0 - 2.0 / (3.0 * df)).powi(p as i32),
        depth: p,
        dim: d,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::bprf_cell_chain;
    use crate::seeding::{SeedSpec, StreamKind};

    #[test]
    fn recursion_solver_matches_iteration() {
        let a = 0.7;
        let forcing = [(0.3, 0.9), (-0.1, 0.5)];
        let mut u = 2.0;
        for n in 0..12 {
            let closed = geometric_recursion(a, &forcing, 2.0, n).unwrap();
            assert!((closed - u).abs() < 1e-12, "n={n}: {closed} vs {u}");
            u = a * u + forcing.iter().map(|&(b, c)| b * c.powi(n as i32)).sum::<f64>();
        }
    }

    #[test]
    fn resonance_is_rejected() {
        assert!(geometric_recursion(0.5, &[(1.0, 0.5)], 1.0, 3).is_err());
    }

    #[test]
    fn depth_zero_matches_unit_cube() {
        let ms = bprf_moments(0, 1, &[0.3]).unwrap();
        assert!((ms.sum_sq[0] - (0.09 + 0.49)).abs() < 1e-15);
        assert!((ms.diff(0) + 0.4).abs() < 1e-15);
        assert!((ms.prod[0] - 0.21).abs() < 1e-15);
    }

    #[test]
    fn product_moment_example() {
        // d=1, p=3, x=1/2: (1/2)^3 * 1/4.
        assert!((moment_prod_power(3, 1, 0.5, 1) - 0.03125).abs() < 1e-15);
    }

    #[test]
    fn cross_term_example() {
        assert!((moment_cross_diff(1, 2, 0.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn moments_match_chain_oracle() {
        // The fixed-point chain is an independent implementation of the
        // model; all exact closed forms must agree within 4 SE.
        let spec = SeedSpec::new(31);
        let mut rng = spec.stream(StreamKind::Misc, 0);
        let n = 60_000;
        for &(p, d, xv) in &[(3usize, 1usize, [0.5, 0.0]), (4, 2, [0.3, 0.8]), (6, 2, [0.0, 0.9])] {
            let x = &xv[..d];
            let mut acc = Acc::default();
            for _ in 0..n {
                let (a, b) = bprf_cell_chain(x, p, &mut rng);
                acc.push(&a, &b);
            }
            let ms = bprf_moments(p, d, x).unwrap();
            for i in 0..d {
                acc.assert_close(i, n, &ms);
            }
            if d == 2 {
                let (mean, se) = acc.cross_stats(n);
                let expect = ms.cross_diff[1];
                assert!((mean - expect).abs() < 4.0 * se, "cross at p={p}: {mean} vs {expect}");
            }
        }
    }

    #[derive(Default)]
    struct Acc {
        prod: Vec<(f64, f64)>,
        diff: Vec<(f64, f64)>,
        s2: Vec<(f64, f64)>,
        s3: Vec<(f64, f64)>,
        s4: Vec<(f64, f64)>,
        cross: (f64, f64),
    }

    impl Acc {
        fn push(&mut self, a: &[f64], b: &[f64]) {
            let d = a.len();
            self.prod.resize(d, (0.0, 0.0));
            self.diff.resize(d, (0.0, 0.0));
            self.s2.resize(d, (0.0, 0.0));
            self.s3.resize(d, (0.0, 0.0));
            self.s4.resize(d, (0.0, 0.0));
            for i in 0..d {
                add(&mut self.prod[i], a[i] * b[i]);
                add(&mut self.diff[i], a[i] - b[i]);
                add(&mut self.s2[i], a[i] * a[i] + b[i] * b[i]);
                add(&mut self.s3[i], a[i].powi(3) + b[i].powi(3));
                add(&mut self.s4[i], a[i].powi(4) + b[i].powi(4));
            }
            if d == 2 {
                add(&mut self.cross, (b[0] - a[0]) * (b[1] - a[1]));
            }
        }

        fn assert_close(&self, i: usize, n: usize, ms: &MomentSet) {
            let close = |acc: &(f64, f64), expect: f64, what: &str| {
                let (mean, se) = stats(acc, n);
                assert!((mean - expect).abs() < 4.0 * se.max(1e-9), "{what}: {mean} vs {expect}");
            };
            close(&self.prod[i], ms.prod[i], "prod");
            close(&self.diff[i], ms.diff(i), "diff");
            close(&self.s2[i], ms.sum_sq[i], "sum_sq");
            close(&self.s4[i], ms.sum_quartic[i], "sum_quartic");
            // The third moment only has an upper bound.
            let (mean, se) = stats(&self.s3[i], n);
            assert!(mean <= ms.sum_cube[i].value() + 4.0 * se);
        }

        fn cross_stats(&self, n: usize) -> (f64, f64) {
            stats(&self.cross, n)
        }
    }

    fn add(acc: &mut (f64, f64), v: f64) {
        acc.0 += v;
        acc.1 += v * v;
    }

    fn stats(acc: &(f64, f64), n: usize) -> (f64, f64) {
        let nf = n as f64;
        let mean = acc.0 / nf;
        ((mean), ((acc.1 / nf - mean * mean).max(0.0) / nf).sqrt())
    }

    #[test]
    fn geometry_examples() {
        // d=1, p=2: 1 * 4 * (1/3)^2 = 4/9.
        let g = bprf_geometry(2, 1, None).unwrap();
        assert!((g.expected_diam2_sum - 4.0 / 9.0).abs() < 1e-15);
        // p=0, d=3: the unit cube's squared diameter.
        let g = bprf_geometry(0, 3, None).unwrap();
        assert!((g.expected_diam2_sum - 3.0).abs() < 1e-15);
        assert!((KAPPA - 0.494).abs() < 5e-4);
        assert!(KAPPA < 0.5);
    }

    #[test]
    fn volume_bound_needs_n() {
        let g = bprf_geometry(3, 2, None).unwrap();
        assert!(g.volume_sum_bound(5.0).is_err());
        let g = bprf_geometry(3, 2, Some(1000)).unwrap();
        let v = g.volume_sum_bound(5.0).unwrap();
        assert!(v > 0.0 && v <= 8.0 * (1.0 / 5.0 + 1.0));
    }
}
