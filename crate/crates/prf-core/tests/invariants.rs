//! Cross-module invariants: fast-path point location against the scan
//! oracle, partition validity across the sampler grid, distributional laws
//! of the samplers, and structural properties of the estimators.

use prf_core::estimators::{fit_tree, Dataset, ForestEstimator};
use prf_core::functions::RegressionFn;
use prf_core::models::{ModelSpec, Sampler};
use prf_core::oracles;
use prf_core::rates::fit_rate;
use prf_core::seeding::{SeedSpec, StreamKind};
use proptest::prelude::*;
use rand::Rng;

fn sampler_grid() -> Vec<ModelSpec> {
    vec![
        ModelSpec::Toy { k: 2 },
        ModelSpec::Toy { k: 17 },
        ModelSpec::Toy { k: 128 },
        ModelSpec::Purf { k: 1 },
        ModelSpec::Purf { k: 40 },
        ModelSpec::Bprf { depth: 0, dim: 2 },
        ModelSpec::Bprf { depth: 6, dim: 1 },
        ModelSpec::Bprf { depth: 5, dim: 3 },
        ModelSpec::Ubprf { k: 0, dim: 1 },
        ModelSpec::Ubprf { k: 25, dim: 2 },
        ModelSpec::Midpoint { depth: 4, dim: 2, weights: vec![0.3, 0.7] },
        ModelSpec::Midpoint { depth: 3, dim: 1, weights: vec![1.0] },
        ModelSpec::Holdout { leaves: 12, dim: 2, n_prime: 200, sigma: 0.25, mtry: None },
    ]
}

/// Every sampler output is a valid partition and the fast locate path
/// agrees with the scan oracle, with unique membership.
#[test]
fn samplers_pass_partition_invariants() {
    let seed = SeedSpec::new(101);
    for (si, spec) in sampler_grid().into_iter().enumerate() {
        let f = RegressionFn::Sum { dim: spec.dim() };
        let mut rng = seed.stream(StreamKind::Misc, si as u64);
        let sampler = Sampler::prepare(&spec, &f, &mut rng).unwrap();
        let draws = if spec.nominal_leaves() > 64 { 100 } else { 1000 };
        for _ in 0..draws {
            let p = sampler.sample(&mut rng).unwrap();
            p.check_invariants().unwrap();
        }
    }
}

#[test]
fn locate_fast_path_matches_scan() {
    let seed = SeedSpec::new(102);
    for (si, spec) in sampler_grid().into_iter().enumerate() {
        let f = RegressionFn::Sum { dim: spec.dim() };
        let mut rng = seed.stream(StreamKind::Misc, 50 + si as u64);
        let sampler = Sampler::prepare(&spec, &f, &mut rng).unwrap();
        let d = spec.dim();
        for _ in 0..20 {
            let p = sampler.sample(&mut rng).unwrap();
            for _ in 0..500 {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let fast = p.locate(&x).unwrap();
                let scan = p.locate_scan(&x).unwrap();
                assert_eq!(fast, scan, "model {} at {x:?}", spec.name());
                // Membership is unique: no other cell contains x.
                let hits = (0..p.n_cells()).filter(|&i| p.cell(i).contains(&x)).count();
                assert_eq!(hits, 1);
            }
        }
    }
}

/// Kolmogorov asymptotic tail probability.
fn kolmogorov_p(d_stat: f64, n: usize) -> f64 {
    let lambda = ((n as f64).sqrt() + 0.12 + 0.11 / (n as f64).sqrt()) * d_stat;
    let mut p = 0.0;
    for j in 1..=100 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        p += 2.0 * sign * (-2.0 * (j as f64 * lambda).powi(2)).exp();
    }
    p.clamp(0.0, 1.0)
}

/// Interior law of the translated grid: `beta * k` is uniform on (0,1).
#[test]
fn toy_interior_law_is_uniform() {
    let k = 16;
    let x = [0.37];
    let n = 10_000;
    let mut rng = SeedSpec::new(103).stream(StreamKind::Misc, 0);
    let mut vals: Vec<f64> = (0..n)
        .map(|_| {
            let p = prf_core::models::sample_toy(k, &mut rng).unwrap();
            let (_, beta) = p.cell_bounds_at(&x).unwrap()[0];
            beta * k as f64
        })
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut d_stat: f64 = 0.0;
    for (i, &v) in vals.iter().enumerate() {
        let cdf = v.clamp(0.0, 1.0);
        d_stat = d_stat
            .max((cdf - i as f64 / n as f64).abs())
            .max(((i + 1) as f64 / n as f64 - cdf).abs());
    }
    let p_value = kolmogorov_p(d_stat, n);
    assert!(p_value > 0.01, "KS D = {d_stat}, p = {p_value}");
}

/// Joint survival of the order-statistics model on a (t, s) grid.
#[test]
fn purf_survival_invariant() {
    let rows = prf_core::checks::purf_survival_check(
        8,
        0.5,
        &[0.05, 0.15, 0.25, 0.35, 0.45],
        &[0.05, 0.15, 0.25, 0.35, 0.45],
        30_000,
        SeedSpec::new(104),
    )
    .unwrap();
    for r in rows {
        assert!(r.z.abs() < 4.0, "{r:?}");
    }
}

/// Closed-form moments match the samplers within 4 SE on a coarse grid
/// (the acceptance suite runs the fine grid at full budget).
#[test]
fn closed_form_moments_match_samplers() {
    let cases: Vec<(ModelSpec, Vec<f64>)> = vec![
        (ModelSpec::Toy { k: 8 }, vec![0.03]),
        (ModelSpec::Purf { k: 5 }, vec![0.9]),
        (ModelSpec::Bprf { depth: 4, dim: 2 }, vec![0.25, 0.7]),
    ];
    for (i, (spec, x)) in cases.into_iter().enumerate() {
        let rows =
            prf_core::checks::check_moments(&spec, &x, 30_000, SeedSpec::new(200 + i as u64))
                .unwrap();
        assert!(prf_core::checks::max_abs_z(&rows) < 4.0, "{}: {rows:#?}", spec.name());
    }
}

/// The toy infinite forest equals the triangular-kernel smoother: the
/// squared bias from the closed-form convolution sits inside the
/// theoretical pointwise band around `(s'')^2 / (144 k^4)`.
#[test]
fn toy_kernel_bias_consistency() {
    let f = RegressionFn::Sinusoidal;
    let c3 = f.c3().unwrap();
    let s2_sup = f.sup_norm_second().unwrap();
    for k in [64usize, 128] {
        let kf = k as f64;
        let band = 3.0 * c3 * (s2_sup + 1.5 * c3) / (4.0 * kf.powi(5));
        for i in 1..20 {
            let x = i as f64 / 20.0;
            let smoothed = oracles::kernel_bias_integral(&f, k, x).unwrap();
            let bias_sq = (smoothed - f.eval(&[x]).unwrap()).powi(2);
            let center = f.second_derivs(&[x]).unwrap()[0][0].powi(2) / (144.0 * kf.powi(4));
            assert!(
                (bias_sq - center).abs() <= band,
                "k={k} x={x}: {bias_sq} vs {center} +- {band}"
            );
        }
    }
}

/// Tree-variance band: the interior closed form (s')^2/(12 k^2) sits inside
/// the two-sided remainder band for k >= 32.
#[test]
fn toy_variance_band_contains_leading_term() {
    let f = RegressionFn::Sinusoidal;
    for k in [32usize, 64, 128] {
        for &x in &[0.2, 0.37, 0.5, 0.71] {
            let ms = oracles::toy_moments(k, x).unwrap();
            let q = oracles::prop3_quantities(&ms, &f, &[x]).unwrap();
            let bands = oracles::bias_bands(&q);
            let leading = f.gradient(&[x]).unwrap()[0].powi(2) / (12.0 * (k * k) as f64);
            assert!(
                (leading - bands.var_center).abs() <= bands.var_radius,
                "k={k} x={x}"
            );
        }
    }
}

#[test]
fn forest_prediction_invariant_under_permutation() {
    let seed = SeedSpec::new(105);
    let mut rng = seed.stream(StreamKind::Misc, 3);
    let f = RegressionFn::Sinusoidal;
    let data = prf_core::estimators::generate_dataset(&f, 300, 0.25, &mut rng).unwrap();
    let spec = ModelSpec::Purf { k: 9 };
    let sampler = Sampler::prepare_data_free(&spec).unwrap();
    let trees: Vec<_> = (0..5)
        .map(|_| fit_tree(sampler.sample(&mut rng).unwrap(), &data).unwrap())
        .collect();
    let mut reversed = trees.clone();
    reversed.reverse();
    let forest_a = ForestEstimator::new(trees).unwrap();
    let forest_b = ForestEstimator::new(reversed).unwrap();
    for i in 0..50 {
        let x = [(i as f64 + 0.5) / 50.0];
        let (a, b) = (forest_a.predict(&x).unwrap(), forest_b.predict(&x).unwrap());
        // Equal up to summation-order rounding.
        assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Rescaling all biases shifts the intercept and leaves the slope
    /// bit-identical.
    #[test]
    fn rate_fit_scale_equivariance(
        biases in proptest::collection::vec(1e-9f64..1e3, 3..8),
        log_c in -6f64..6.0,
    ) {
        let table: Vec<(f64, f64)> = biases
            .iter()
            .enumerate()
            .map(|(i, &b)| ((32 << i) as f64, b))
            .collect();
        let c = 2f64.powf(log_c);
        let scaled: Vec<(f64, f64)> = table.iter().map(|&(k, b)| (k, c * b)).collect();
        let f1 = fit_rate(&table).unwrap();
        let f2 = fit_rate(&scaled).unwrap();
        // log2(c b) = log2 c + log2 b up to rounding, so the slopes agree
        // to machine precision.
        prop_assert!((f1.slope - f2.slope).abs() <= 1e-11 * (1.0 + f1.slope.abs()));
        prop_assert!(f1.r_squared >= 0.0 && f1.r_squared <= 1.0);
    }

    /// Uniform points always locate, uniquely, in any toy partition.
    #[test]
    fn toy_locate_is_total(k in 2usize..200, shift in 0f64..1.0, x in 0f64..1.0) {
        prop_assume!(x < 1.0 && shift < 1.0);
        let p = prf_core::models::toy_partition_with_shift(k, shift).unwrap();
        let i = p.locate(&[x]).unwrap();
        prop_assert_eq!(i, p.locate_scan(&[x]).unwrap());
    }

    /// Moment-set invariants hold across the parameter space.
    #[test]
    fn moment_invariants(k in 2usize..300, x in 0f64..1.0) {
        let ms = oracles::toy_moments(k, x).unwrap();
        ms.check_invariants().unwrap();
        let ms = oracles::purf_moments(k, x).unwrap();
        ms.check_invariants().unwrap();
        let ms = oracles::bprf_moments(k % 12, 1 + k % 7, &vec![x; 1 + k % 7]).unwrap();
        ms.check_invariants().unwrap();
    }

    /// The 0/0 = 0 convention: tree predictions are finite everywhere.
    #[test]
    fn tree_predictions_finite(n_pts in 1usize..40, seed in 0u64..1000) {
        let mut rng = SeedSpec::new(seed).stream(StreamKind::Misc, 9);
        let f = RegressionFn::Sinusoidal;
        let data = prf_core::estimators::generate_dataset(&f, n_pts, 0.25, &mut rng).unwrap();
        let p = prf_core::models::sample_purf(20, &mut rng).unwrap();
        let tree = fit_tree(p, &data).unwrap();
        for i in 0..32 {
            let x = [i as f64 / 32.0];
            prop_assert!(tree.predict(&x).unwrap().is_finite());
        }
    }
}

/// Single-point dataset sanity for the regressogram.
#[test]
fn dataset_rejects_bad_points() {
    assert!(Dataset::new(1, vec![1.0], vec![0.5], 0.0).is_err());
    assert!(Dataset::new(1, vec![0.2, 0.3], vec![0.5], 0.0).is_err());
}
