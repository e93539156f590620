//! Monte Carlo estimation of the equivalent smoothing kernel
//! `h(t, x) = E[ 1{t in I(x)} / |I(x)| ]` of a one-dimensional
//! random-partition model: the density whose convolution with the target
//! gives the expected infinite forest at `x`.

use crate::error::{Error, Result};
use crate::functions::RegressionFn;
use crate::models::{ModelSpec, Sampler};
use crate::seeding::{SeedSpec, StreamKind};
use rayon::prelude::*;
use serde::Serialize;

const PARTITIONS_PER_BATCH: usize = 256;

#[derive(Debug, Clone, Serialize)]
pub struct KernelTable {
    pub model: ModelSpec,
    pub x: f64,
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_partitions: usize,
    /// Trapezoid integral of the estimate over `[0,1)` (the grid is closed
    /// with a terminal rectangle) and its standard error; the true kernel
    /// has unit mass.
    pub mass: f64,
    pub mass_se: f64,
}

/// `n` equispaced points `i/n`, the first grid covering `[0,1)`.
pub fn default_t_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

pub fn estimate_kernel(
    spec: &ModelSpec,
    f: &RegressionFn,
    x: f64,
    t_grid: &[f64],
    n_partitions: usize,
    seed: SeedSpec,
) -> Result<KernelTable> {
    if spec.dim() != 1 {
        return Err(Error::Unsupported(
            "kernel estimation is one-dimensional; the reference plots use d = 1".into(),
        ));
    }
    if n_partitions == 0 {
        return Err(Error::Parameter("need at least one partition".into()));
    }
    if !(0.0..1.0).contains(&x) {
        return Err(Error::OutOfDomain { coord: 0, value: x });
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("t grid must be sorted and non-empty".into()));
    }
    if !(0.0..1.0).contains(&t_grid[0]) || *t_grid.last().unwrap() >= 1.0 {
        return Err(Error::Parameter("t grid must lie in [0,1)".into()));
    }

    let m = t_grid.len();
    // Trapezoid weights on the grid, closing [t_last, 1) with a rectangle.
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let left = if i == 0 { 0.0 } else { 0.5 * (t_grid[i] - t_grid[i - 1]) };
        let right = if i == m - 1 {
            1.0 - t_grid[i]
        } else {
            0.5 * (t_grid[i + 1] - t_grid[i])
        };
        weights[i] = left + right;
    }
    let mut weight_prefix = vec![0.0; m + 1];
    for i in 0..m {
        weight_prefix[i + 1] = weight_prefix[i] + weights[i];
    }

    struct BatchAcc {
        sum: Vec<f64>,
        sum_sq: Vec<f64>,
        mass: f64,
        mass_sq: f64,
    }

    // Hold-out partitions share one extra sample for the whole run.
    let sampler = {
        let mut rng = seed.stream(StreamKind::HoldoutData, 0);
        Sampler::prepare(spec, f, &mut rng)?
    };
    let n_batches = n_partitions.div_ceil(PARTITIONS_PER_BATCH);
    let batches: Vec<Result<BatchAcc>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.stream(StreamKind::Kernel, b as u64);
            let count = PARTITIONS_PER_BATCH.min(n_partitions - b * PARTITIONS_PER_BATCH);
            // Range updates into difference arrays: each partition adds its
            // 1/|cell| plateau over the grid points inside the cell.
            let mut d1 = vec![0.0; m + 1];
            let mut d2 = vec![0.0; m + 1];
            let (mut mass, mut mass_sq) = (0.0, 0.0);
            for _ in 0..count {
                let p = sampler.sample(&mut rng)?;
                let cell = p.locate(&[x])?;
                let (a, b_up) = (p.cell_lower(cell)[0], p.cell_upper(cell)[0]);
                let c = 1.0 / (b_up - a);
                let lo = t_grid.partition_point(|&t| t < a);
                let hi = t_grid.partition_point(|&t| t < b_up);
                d1[lo] += c;
                d1[hi] -= c;
                d2[lo] += c * c;
                d2[hi] -= c * c;
                let w = c * (weight_prefix[hi] - weight_prefix[lo]);
                mass += w;
                mass_sq += w * w;
            }
            let mut acc = BatchAcc { sum: vec![0.0; m], sum_sq: vec![0.0; m], mass, mass_sq };
            let (mut run1, mut run2) = (0.0, 0.0);
            for i in 0..m {
                run1 += d1[i];
                run2 += d2[i];
                acc.sum[i] = run1;
                acc.sum_sq[i] = run2;
            }
            Ok(acc)
        })
        .collect();

    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    let (mut mass_sum, mut mass_sq_sum) = (0.0, 0.0);
    for b in batches {
        let b = b?;
        for i in 0..m {
            sum[i] += b.sum[i];
            sum_sq[i] += b.sum_sq[i];
        }
        mass_sum += b.mass;
        mass_sq_sum += b.mass_sq;
    }

    let n = n_partitions as f64;
    let h: Vec<f64> = sum.iter().map(|&s| s / n).collect();
    let stderr: Vec<f64> = h
        .iter()
        .zip(&sum_sq)
        .map(|(&mean, &sq)| ((sq / n - mean * mean).max(0.0) / n).sqrt())
        .collect();
    let mass = mass_sum / n;
    let mass_se = ((mass_sq_sum / n - mass * mass).max(0.0) / n).sqrt();
    Ok(KernelTable {
        model: spec.clone(),
        x,
        t: t_grid.to_vec(),
        h,
        stderr,
        n_partitions,
        mass,
        mass_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_model_gives_flat_unit_kernel() {
        // One leaf: I(x) = [0,1), so h is identically 1.
        let spec = ModelSpec::Ubprf { k: 0, dim: 1 };
        let f = RegressionFn::Sinusoidal;
        let grid = default_t_grid(64);
        let kt = estimate_kernel(&spec, &f, 0.3, &grid, 50, SeedSpec::new(1)).unwrap();
        assert!(kt.h.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!((kt.mass - 1.0).abs() < 1e-12);
        assert!(kt.stderr.iter().all(|&s| s < 1e-12));
    }

    #[test]
    fn toy_kernel_matches_triangle() {
        let k = 32;
        let spec = ModelSpec::Toy { k };
        let f = RegressionFn::Sinusoidal;
        let grid = default_t_grid(512);
        let kt = estimate_kernel(&spec, &f, 0.5, &grid, 4000, SeedSpec::new(7)).unwrap();
        for (i, &t) in kt.t.iter().enumerate() {
            let expect = crate::oracles::toy_kernel(k, t - 0.5).unwrap();
            let tol = 4.0 * kt.stderr[i].max(0.3);
            assert!((kt.h[i] - expect).abs() < tol, "t={t}: {} vs {expect}", kt.h[i]);
        }
        assert!((kt.mass - 1.0).abs() < 4.0 * kt.mass_se.max(1e-3));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = ModelSpec::Purf { k: 16 };
        let f = RegressionFn::Sinusoidal;
        let grid = default_t_grid(128);
        let a = estimate_kernel(&spec, &f, 0.25, &grid, 600, SeedSpec::new(3)).unwrap();
        let b = estimate_kernel(&spec, &f, 0.25, &grid, 600, SeedSpec::new(3)).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.mass, b.mass);
    }

    #[test]
    fn rejects_multidimensional_models() {
        let spec = ModelSpec::Bprf { depth: 3, dim: 2 };
        let f = RegressionFn::Sum { dim: 2 };
        let grid = default_t_grid(16);
        assert!(matches!(
            estimate_kernel(&spec, &f, 0.5, &grid, 10, SeedSpec::new(1)),
            Err(Error::Unsupported(_))
        ));
    }
}
