//! Monte Carlo estimation of the three-term risk decomposition of purely
//! random forests: the infinite-forest squared bias, the tree-variance term
//! it is inflated by at finite forest size, the data-driven estimation
//! error with its theoretical bounds, and the full risk.
//!
//! All engines split their budget into [`N_BATCHES`] independent replicate
//! batches with their own derived random streams. Batches run in parallel
//! and are reduced in index order, so results are bit-identical for a fixed
//! master seed at any worker count, and standard errors come from the
//! spread of the batch estimates.

use crate::error::{Error, Result};
use crate::estimators::{fit_tree, generate_dataset, s_tilde, TreeEstimator};
use crate::functions::RegressionFn;
use crate::geometry::Partition;
use crate::models::{ModelSpec, Sampler};
use crate::oracles::alpha_urt;
use crate::seeding::{SeedSpec, StreamKind};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const N_BATCHES: usize = 20;

/// Monte Carlo budget of a bias run: integration points and partition
/// counts for the single-tree and infinite-forest estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub n_x: usize,
    pub n_u_tree: usize,
    pub n_u_inf: usize,
}

impl Budget {
    /// The reference protocol: 1000 integration points, 500 partitions for
    /// tree-level estimates, and `k^2` partitions for the infinite forest
    /// (`2^(ceil(2 alpha p))` for the balanced recursive model, whose bias
    /// decays with exponent `alpha` instead of 2).
    pub fn default_for(spec: &ModelSpec) -> Budget {
        let n_u_inf = match spec {
            ModelSpec::Bprf { depth, dim } => {
                let exp = (2.0 * alpha_urt(*dim) * *depth as f64).ceil() as u32;
                2usize.pow(exp.min(30))
            }
            _ => {
                let k = spec.size_parameter().max(2);
                (k * k).min(1 << 30)
            }
        };
        Budget { n_x: 1000, n_u_tree: 500, n_u_inf }
    }

    fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_u_tree == 0 || self.n_u_inf == 0 {
            return Err(Error::Parameter("budget counts must be positive".into()));
        }
        Ok(())
    }
}

/// How the x-integral is sampled: plain Monte Carlo, or one jittered
/// stratum per point for variance reduction (Latin-hypercube style across
/// coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum XIntegration {
    #[default]
    MonteCarlo,
    Stratified,
}

/// Integration region for the bias integrals: the full cube, or the
/// border-trimmed interval `[eps, 1-eps]` of a one-dimensional model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BorderPolicy {
    Full,
    Borderless { eps: f64 },
}

impl BorderPolicy {
    /// The model's own border width: `1/k` for the toy model and
    /// `4 ln(k)/k` for the order-statistics model.
    pub fn borderless_default(spec: &ModelSpec) -> Result<BorderPolicy> {
        match spec.default_border_eps() {
            Some(eps) => BorderPolicy::custom(eps),
            None => Err(Error::Unsupported(format!(
                "the {} model defines no border width; pass an explicit eps",
                spec.name()
            ))),
        }
    }

    pub fn custom(eps: f64) -> Result<BorderPolicy> {
        if !(0.0..0.5).contains(&eps) {
            return Err(Error::Parameter(format!("eps = {eps} must lie in [0, 1/2)")));
        }
        Ok(BorderPolicy::Borderless { eps })
    }

    pub fn eps(&self) -> Option<f64> {
        match *self {
            BorderPolicy::Full => None,
            BorderPolicy::Borderless { eps } => Some(eps),
        }
    }
}

/// A Monte Carlo estimate with the standard error of its batch means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_batches(batches: &[f64]) -> Estimate {
        let n = batches.len() as f64;
        let mean = batches.iter().sum::<f64>() / n;
        let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { value: mean, stderr: (var / n).sqrt() }
    }
}

/// Forest size: a finite number of trees or the infinite-forest limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QValue {
    Finite(u64),
    Infinite,
}

impl fmt::Display for QValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QValue::Finite(q) => write!(f, "{q}"),
            QValue::Infinite => write!(f, "inf"),
        }
    }
}

impl QValue {
    pub fn parse(s: &str) -> Result<QValue> {
        if s == "inf" {
            Ok(QValue::Infinite)
        } else {
            s.parse::<u64>()
                .map_err(|_| Error::Parameter(format!("bad forest size '{s}'")))
                .and_then(|q| {
                    if q == 0 {
                        Err(Error::Parameter("forest size must be >= 1".into()))
                    } else {
                        Ok(QValue::Finite(q))
                    }
                })
        }
    }
}

impl Serialize for QValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QValue::Finite(q) => s.serialize_u64(*q),
            QValue::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for QValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) if q >= 1 => Ok(QValue::Finite(q)),
            Raw::Num(_) => Err(serde::de::Error::custom("forest size must be >= 1")),
            Raw::Str(s) => QValue::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Budgets actually used after dividing into batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveBudget {
    pub n_x: usize,
    pub n_u_tree: usize,
    pub n_u_inf: usize,
    pub batches: usize,
}

/// Monte Carlo estimates of the bias decomposition of one model/target
/// pair at one size parameter.
///
/// `b1` is the single-tree approximation error, `b_inf` the infinite-forest
/// one (bias-corrected; `b_inf_raw` keeps the uncorrected value), `v_tree`
/// their difference and `v_tree_direct` the same term estimated as the
/// within-point variance of the projection over the tree pool. `b_q` lists
/// `b_inf + v_tree/q` for the requested forest sizes.
#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub model: ModelSpec,
    pub function: String,
    pub size_parameter: usize,
    pub eps: Option<f64>,
    pub b1: Estimate,
    pub b_inf: Estimate,
    pub b_inf_raw: f64,
    pub v_tree: Estimate,
    pub v_tree_direct: Estimate,
    /// Per-batch residual `b1 - b_inf - v_tree_direct`; zero in expectation.
    pub decomposition_gap: Estimate,
    pub b_q: Vec<(QValue, Estimate)>,
    pub budget: Budget,
    pub effective: EffectiveBudget,
    pub x_mode: XIntegration,
    pub seed: u64,
}

struct BatchSizes {
    n_x: Vec<usize>,
    n_tree: Vec<usize>,
    n_inf: Vec<usize>,
}

fn split_budget(budget: &Budget) -> BatchSizes {
    let split = |total: usize, min_per: usize| -> Vec<usize> {
        (0..N_BATCHES)
            .map(|b| (total / N_BATCHES + usize::from(b < total % N_BATCHES)).max(min_per))
            .collect()
    };
    BatchSizes {
        n_x: split(budget.n_x, 1),
        // Sample variances need at least two draws per batch.
        n_tree: split(budget.n_u_tree, 2),
        n_inf: split(budget.n_u_inf, 2),
    }
}

/// Draw one integration point into `buf`.
fn draw_x<R: Rng>(
    buf: &mut [f64],
    lo: f64,
    width: f64,
    mode: XIntegration,
    stratum: usize,
    n_strata: usize,
    perms: &[Vec<usize>],
    rng: &mut R,
) {
    match mode {
        XIntegration::MonteCarlo => {
            for v in buf.iter_mut() {
                *v = lo + width * rng.random::<f64>();
            }
        }
        XIntegration::Stratified => {
            for (c, v) in buf.iter_mut().enumerate() {
                let slot = perms[c][stratum];
                *v = lo + width * ((slot as f64 + rng.random::<f64>()) / n_strata as f64);
            }
        }
    }
}

/// Lazily memoized per-cell conditional means of one partition.
struct ProjectionCache {
    vals: Vec<f64>,
}

impl ProjectionCache {
    fn new(p: &Partition) -> Self {
        ProjectionCache { vals: vec![f64::NAN; p.n_cells()] }
    }

    fn value(&mut self, p: &Partition, f: &RegressionFn, x: &[f64]) -> Result<f64> {
        let i = p.locate(x)?;
        if self.vals[i].is_nan() {
            self.vals[i] = f.cell_average(&p.cell(i))?;
        }
        Ok(self.vals[i])
    }
}

struct BiasBatch {
    b1: f64,
    b_inf: f64,
    b_inf_raw: f64,
    v_direct: f64,
}

/// Estimate the bias decomposition by Monte Carlo.
pub fn estimate_bias(
    spec: &ModelSpec,
    f: &RegressionFn,
    policy: BorderPolicy,
    q_list: &[QValue],
    budget: Budget,
    x_mode: XIntegration,
    seed: SeedSpec,
) -> Result<BiasReport> {
    spec.validate()?;
    budget.validate()?;
    if f.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: f.dim() });
    }
    let (lo, width, scale) = match policy {
        BorderPolicy::Full => (0.0, 1.0, 1.0),
        BorderPolicy::Borderless { eps } => {
            if spec.dim() != 1 {
                return Err(Error::Unsupported(
                    "borderless integration is defined for one-dimensional models".into(),
                ));
            }
            // The borderless bias is the integral over [eps, 1-eps], so the
            // sample mean is rescaled by the interval length.
            (eps, 1.0 - 2.0 * eps, 1.0 - 2.0 * eps)
        }
    };

    let sampler = prepare_shared_sampler(spec, f, seed)?;
    let sizes = split_budget(&budget);

    let batches: Vec<Result<BiasBatch>> = (0..N_BATCHES)
        .into_par_iter()
        .map(|b| {
            let n_x = sizes.n_x[b];
            let n_tree = sizes.n_tree[b];
            let n_inf = sizes.n_inf[b];
            let d = spec.dim();
            let mut rng_x = seed.stream(StreamKind::XDraw, b as u64);

            // Latin-hypercube strata permutations for stratified mode.
            let perms: Vec<Vec<usize>> = (0..d)
                .map(|_| {
                    let mut p: Vec<usize> = (0..n_x).collect();
                    for i in (1..n_x).rev() {
                        p.swap(i, rng_x.random_range(0..=i));
                    }
                    p
                })
                .collect();

            let mut xs = vec![0.0; n_x * d];
            let mut s_vals = vec![0.0; n_x];
            for i in 0..n_x {
                let buf = &mut xs[i * d..(i + 1) * d];
                draw_x(buf, lo, width, x_mode, i, n_x, &perms, &mut rng_x);
                s_vals[i] = f.eval(buf)?;
            }

            // Tree pool: squared error and projection variance per point.
            let mut rng_tree = seed.stream(StreamKind::TreePartition, b as u64);
            let mut err_sum = vec![0.0; n_x];
            let mut proj_sum = vec![0.0; n_x];
            let mut proj_sum_sq = vec![0.0; n_x];
            for _ in 0..n_tree {
                let p = sampler.sample(&mut rng_tree)?;
                let mut cache = ProjectionCache::new(&p);
                for i in 0..n_x {
                    let v = cache.value(&p, f, &xs[i * d..(i + 1) * d])?;
                    err_sum[i] += (s_vals[i] - v) * (s_vals[i] - v);
                    proj_sum[i] += v;
                    proj_sum_sq[i] += v * v;
                }
            }
            let mt = n_tree as f64;
            let b1 = scale * err_sum.iter().sum::<f64>() / (mt * n_x as f64);
            let v_direct = scale
                * (0..n_x)
                    .map(|i| {
                        (proj_sum_sq[i] - proj_sum[i] * proj_sum[i] / mt).max(0.0) / (mt - 1.0)
                    })
                    .sum::<f64>()
                / n_x as f64;

            // Infinite-forest pool: squared error of the pooled projection
            // mean, de-biased by the plug-in variance of that mean.
            let mut rng_inf = seed.stream(StreamKind::InfPartition, b as u64);
            let mut m_sum = vec![0.0; n_x];
            let mut m_sum_sq = vec![0.0; n_x];
            for _ in 0..n_inf {
                let p = sampler.sample(&mut rng_inf)?;
                let mut cache = ProjectionCache::new(&p);
                for i in 0..n_x {
                    let v = cache.value(&p, f, &xs[i * d..(i + 1) * d])?;
                    m_sum[i] += v;
                    m_sum_sq[i] += v * v;
                }
            }
            let mi = n_inf as f64;
            let (mut raw_acc, mut corr_acc) = (0.0, 0.0);
            for i in 0..n_x {
                let mean = m_sum[i] / mi;
                let var = (m_sum_sq[i] - mi * mean * mean).max(0.0) / (mi - 1.0);
                let raw = (s_vals[i] - mean) * (s_vals[i] - mean);
                raw_acc += raw;
                corr_acc += raw - var / mi;
            }
            Ok(BiasBatch {
                b1,
                b_inf: scale * corr_acc / n_x as f64,
                b_inf_raw: scale * raw_acc / n_x as f64,
                v_direct,
            })
        })
        .collect();

    let mut b1s = Vec::with_capacity(N_BATCHES);
    let mut binfs = Vec::with_capacity(N_BATCHES);
    let mut raws = Vec::with_capacity(N_BATCHES);
    let mut vdirs = Vec::with_capacity(N_BATCHES);
    for b in batches {
        let b = b?;
        b1s.push(b.b1);
        binfs.push(b.b_inf);
        raws.push(b.b_inf_raw);
        vdirs.push(b.v_direct);
    }
    let vtrees: Vec<f64> = b1s.iter().zip(&binfs).map(|(a, c)| a - c).collect();
    let gaps: Vec<f64> =
        vtrees.iter().zip(&vdirs).map(|(v, dct)| v - dct).collect();

    let b1 = Estimate::from_batches(&b1s);
    let b_inf = Estimate::from_batches(&binfs);
    let v_tree = Estimate::from_batches(&vtrees);
    let b_q = q_list
        .iter()
        .map(|&q| {
            let per_batch: Vec<f64> = match q {
                QValue::Infinite => binfs.clone(),
                QValue::Finite(q) => binfs
                    .iter()
                    .zip(&vtrees)
                    .map(|(bi, vt)| bi + vt / q as f64)
                    .collect(),
            };
            (q, Estimate::from_batches(&per_batch))
        })
        .collect();

    let check = |v: f64| v.is_finite();
    if !check(b1.value) || !check(b_inf.value) {
        return Err(Error::Numeric("bias estimate is not finite".into()));
    }

    Ok(BiasReport {
        model: spec.clone(),
        function: f.name().to_string(),
        size_parameter: spec.size_parameter(),
        eps: policy.eps(),
        b1,
        b_inf,
        b_inf_raw: raws.iter().sum::<f64>() / raws.len() as f64,
        v_tree,
        v_tree_direct: Estimate::from_batches(&vdirs),
        decomposition_gap: Estimate::from_batches(&gaps),
        b_q,
        budget,
        effective: EffectiveBudget {
            n_x: sizes.n_x.iter().sum(),
            n_u_tree: sizes.n_tree.iter().sum(),
            n_u_inf: sizes.n_inf.iter().sum(),
            batches: N_BATCHES,
        },
        x_mode,
        seed: seed.master_seed,
    })
}

/// Hold-out partitions share one extra sample per experiment, drawn from
/// its own stream, so they are i.i.d. conditionally on it; other models
/// need no preparation state.
fn prepare_shared_sampler(
    spec: &ModelSpec,
    f: &RegressionFn,
    seed: SeedSpec,
) -> Result<Sampler> {
    let mut rng = seed.stream(StreamKind::HoldoutData, 0);
    Sampler::prepare(spec, f, &mut rng)
}

/// Replicate budget for the data-dependent engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateBudget {
    /// Fresh (partitions, dataset) replicates.
    pub n_replicates: usize,
    /// Evaluation points per replicate.
    pub n_test_x: usize,
}

impl ReplicateBudget {
    fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 || self.n_test_x == 0 {
            return Err(Error::Parameter("replicate budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimationErrorReport {
    pub model: ModelSpec,
    pub function: String,
    pub n: usize,
    pub sigma: f64,
    pub q: u64,
    /// Monte Carlo `E[(s_tilde(X) - s_hat(X))^2]`.
    pub mc_estimate: Estimate,
    /// `(E[#leaves]/n) (2 sigma^2 + 9 ||s||_inf^2)`.
    pub upper_bound: f64,
    /// `(sigma^2/n) (E[#leaves] - 2 E[sum_cells exp(-n |cell|)])`, clamped
    /// at zero (it degenerates when sigma = 0).
    pub lower_bound: f64,
    /// Lipschitz refinement of the upper bound, when the gradient sup-norm
    /// is known.
    pub lipschitz_upper_bound: Option<f64>,
    pub mean_leaves: f64,
    pub mean_empty_leaves: f64,
    pub seed: u64,
}

/// Monte Carlo estimation error of a forest of `q` regressogram trees with
/// `n` sample points, against the bounds computed from the same partition
/// law.
pub fn estimate_estimation_error(
    spec: &ModelSpec,
    f: &RegressionFn,
    n: usize,
    sigma: f64,
    q: u64,
    budget: ReplicateBudget,
    seed: SeedSpec,
) -> Result<EstimationErrorReport> {
    spec.validate()?;
    budget.validate()?;
    if n == 0 || q == 0 {
        return Err(Error::Parameter("need n >= 1 and q >= 1".into()));
    }
    if f.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: f.dim() });
    }
    let sampler = prepare_shared_sampler(spec, f, seed)?;

    struct Batch {
        err: f64,
        leaves: f64,
        empty: f64,
        exp_vol: f64,
        diam2: f64,
    }

    let reps: Vec<usize> = (0..N_BATCHES)
        .map(|b| (budget.n_replicates / N_BATCHES + usize::from(b < budget.n_replicates % N_BATCHES)).max(1))
        .collect();

    let batches: Vec<Result<Batch>> = (0..N_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng_u = seed.stream(StreamKind::TreePartition, b as u64);
            let mut rng_d = seed.stream(StreamKind::Data, b as u64);
            let mut rng_t = seed.stream(StreamKind::TestX, b as u64);
            let d = spec.dim();
            let mut acc = Batch { err: 0.0, leaves: 0.0, empty: 0.0, exp_vol: 0.0, diam2: 0.0 };
            let mut x = vec![0.0; d];
            for _ in 0..reps[b] {
                let data = generate_dataset(f, n, sigma, &mut rng_d)?;
                let mut trees: Vec<TreeEstimator> = Vec::with_capacity(q as usize);
                for _ in 0..q {
                    let p = sampler.sample(&mut rng_u)?;
                    for c in 0..p.n_cells() {
                        acc.exp_vol += (-(n as f64) * p.cell_volume(c)).exp();
                        acc.diam2 += p.cell_diam2(c);
                    }
                    acc.leaves += p.n_cells() as f64;
                    let t = fit_tree(p, &data)?;
                    acc.empty += t.empty_leaves() as f64;
                    trees.push(t);
                }
                for _ in 0..budget.n_test_x {
                    for v in x.iter_mut() {
                        *v = rng_t.random::<f64>();
                    }
                    let mut proj = 0.0;
                    let mut pred = 0.0;
                    for t in &trees {
                        proj += s_tilde(t.partition(), f, &x)?;
                        pred += t.predict(&x)?;
                    }
                    let diff = (proj - pred) / q as f64;
                    acc.err += diff * diff;
                }
            }
            Ok(acc)
        })
        .collect();

    let mut per_batch_err = Vec::with_capacity(N_BATCHES);
    let (mut leaves, mut empty, mut exp_vol, mut diam2, mut total_trees) =
        (0.0, 0.0, 0.0, 0.0, 0.0);
    for (b, out) in batches.into_iter().enumerate() {
        let out = out?;
        per_batch_err.push(out.err / (reps[b] * budget.n_test_x) as f64);
        leaves += out.leaves;
        empty += out.empty;
        exp_vol += out.exp_vol;
        diam2 += out.diam2;
        total_trees += (reps[b] as u64 * q) as f64;
    }
    let mean_leaves = leaves / total_trees;
    let mean_exp_vol = exp_vol / total_trees;
    let mean_diam2 = diam2 / total_trees;
    let nf = n as f64;
    let upper = mean_leaves / nf * (2.0 * sigma * sigma + 9.0 * f.sup_norm().powi(2));
    let lower = (sigma * sigma / nf * (mean_leaves - 2.0 * mean_exp_vol)).max(0.0);
    let lipschitz = {
        let k_lip = f.grad_sup_norm();
        Some(
            2.0 / nf * (sigma * sigma * mean_leaves + k_lip * k_lip * mean_diam2)
                + f.sup_norm().powi(2) / nf * mean_exp_vol,
        )
    };

    Ok(EstimationErrorReport {
        model: spec.clone(),
        function: f.name().to_string(),
        n,
        sigma,
        q,
        mc_estimate: Estimate::from_batches(&per_batch_err),
        upper_bound: upper,
        lower_bound: lower,
        lipschitz_upper_bound: lipschitz,
        mean_leaves,
        mean_empty_leaves: empty / total_trees,
        seed: seed.master_seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskReport {
    pub model: ModelSpec,
    pub function: String,
    pub n: usize,
    pub sigma: f64,
    pub q: u64,
    pub risk: Estimate,
    pub bias_part: Estimate,
    pub variance_part: Estimate,
    pub mean_empty_leaves: f64,
    pub seed: u64,
}

/// Full quadratic risk of a forest of `q` trees fit on fresh samples, with
/// its decomposition into approximation and estimation parts.
pub fn estimate_risk(
    spec: &ModelSpec,
    f: &RegressionFn,
    n: usize,
    sigma: f64,
    q: u64,
    budget: ReplicateBudget,
    seed: SeedSpec,
) -> Result<RiskReport> {
    spec.validate()?;
    budget.validate()?;
    if n == 0 || q == 0 {
        return Err(Error::Parameter("need n >= 1 and q >= 1".into()));
    }
    if f.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: f.dim() });
    }
    let sampler = prepare_shared_sampler(spec, f, seed)?;
    let reps: Vec<usize> = (0..N_BATCHES)
        .map(|b| (budget.n_replicates / N_BATCHES + usize::from(b < budget.n_replicates % N_BATCHES)).max(1))
        .collect();

    struct Batch {
        risk: f64,
        bias: f64,
        var: f64,
        empty: f64,
        trees: f64,
    }

    let batches: Vec<Result<Batch>> = (0..N_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng_u = seed.stream(StreamKind::ForestReplicate, b as u64);
            let mut rng_d = seed.stream(StreamKind::Data, b as u64);
            let mut rng_t = seed.stream(StreamKind::TestX, b as u64);
            let d = spec.dim();
            let mut acc = Batch { risk: 0.0, bias: 0.0, var: 0.0, empty: 0.0, trees: 0.0 };
            let mut x = vec![0.0; d];
            for _ in 0..reps[b] {
                let data = generate_dataset(f, n, sigma, &mut rng_d)?;
                let mut trees: Vec<TreeEstimator> = Vec::with_capacity(q as usize);
                for _ in 0..q {
                    let p = sampler.sample(&mut rng_u)?;
                    let t = fit_tree(p, &data)?;
                    acc.empty += t.empty_leaves() as f64;
                    acc.trees += 1.0;
                    trees.push(t);
                }
                for _ in 0..budget.n_test_x {
                    for v in x.iter_mut() {
                        *v = rng_t.random::<f64>();
                    }
                    let s = f.eval(&x)?;
                    let mut proj = 0.0;
                    let mut pred = 0.0;
                    for t in &trees {
                        proj += s_tilde(t.partition(), f, &x)?;
                        pred += t.predict(&x)?;
                    }
                    proj /= q as f64;
                    pred /= q as f64;
                    acc.risk += (s - pred) * (s - pred);
                    acc.bias += (s - proj) * (s - proj);
                    acc.var += (proj - pred) * (proj - pred);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut risk = Vec::new();
    let mut bias = Vec::new();
    let mut var = Vec::new();
    let (mut empty, mut trees) = (0.0, 0.0);
    for (b, out) in batches.into_iter().enumerate() {
        let out = out?;
        let denom = (reps[b] * budget.n_test_x) as f64;
        risk.push(out.risk / denom);
        bias.push(out.bias / denom);
        var.push(out.var / denom);
        empty += out.empty;
        trees += out.trees;
    }
    Ok(RiskReport {
        model: spec.clone(),
        function: f.name().to_string(),
        n,
        sigma,
        q,
        risk: Estimate::from_batches(&risk),
        bias_part: Estimate::from_batches(&bias),
        variance_part: Estimate::from_batches(&var),
        mean_empty_leaves: empty / trees,
        seed: seed.master_seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ForestSizeRow {
    pub q: QValue,
    /// `b_inf + v_tree / q` from the decomposition identity.
    pub bq_identity: Estimate,
    /// Direct simulation of a `q`-tree forest's approximation error.
    pub bq_direct: Option<Estimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForestSizeCurve {
    pub rows: Vec<ForestSizeRow>,
    pub report: BiasReport,
    /// Smallest `q` with `B_q <= 2 B_inf`, i.e. `ceil(v_tree / b_inf)`.
    pub q_star: Option<u64>,
    /// Slope of the direct `B_q` against `1/q`; recovers `v_tree`.
    pub slope_vs_inv_q: Option<f64>,
}

/// Bias against forest size over a grid of `q` values.
pub fn forest_size_curve(
    spec: &ModelSpec,
    f: &RegressionFn,
    policy: BorderPolicy,
    q_grid: &[QValue],
    budget: Budget,
    direct_replicates: Option<usize>,
    seed: SeedSpec,
) -> Result<ForestSizeCurve> {
    if q_grid.is_empty() {
        return Err(Error::Parameter("empty q grid".into()));
    }
    let finite: Vec<u64> = q_grid
        .iter()
        .filter_map(|q| match q {
            QValue::Finite(v) => Some(*v),
            QValue::Infinite => None,
        })
        .collect();
    if finite.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("q grid must be strictly increasing".into()));
    }
    let report = estimate_bias(spec, f, policy, q_grid, budget, XIntegration::MonteCarlo, seed)?;

    let direct = match direct_replicates {
        Some(reps) if !finite.is_empty() => {
            Some(direct_forest_bias(spec, f, policy, &finite, reps, budget.n_x, seed)?)
        }
        _ => None,
    };

    let mut rows = Vec::with_capacity(q_grid.len());
    let mut direct_points = Vec::new();
    for (i, &(q, est)) in report.b_q.iter().enumerate() {
        let bq_direct = match (&direct, q) {
            (Some(d), QValue::Finite(qv)) => {
                let est = d[finite.iter().position(|&v| v == qv).unwrap()];
                direct_points.push((1.0 / qv as f64, est.value));
                Some(est)
            }
            _ => None,
        };
        debug_assert_eq!(q, q_grid[i]);
        rows.push(ForestSizeRow { q, bq_identity: est, bq_direct });
    }

    let slope_vs_inv_q = if direct_points.len() >= 2 {
        let n = direct_points.len() as f64;
        let mx = direct_points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = direct_points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = direct_points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = direct_points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };

    let q_star = if report.b_inf.value > 0.0 && report.v_tree.value > 0.0 {
        Some((report.v_tree.value / report.b_inf.value).ceil() as u64)
    } else {
        None
    };

    Ok(ForestSizeCurve { rows, report, q_star, slope_vs_inv_q })
}

/// Direct Monte Carlo of `E[(s(X) - mean_j s_tilde_j(X))^2]` for each `q`.
fn direct_forest_bias(
    spec: &ModelSpec,
    f: &RegressionFn,
    policy: BorderPolicy,
    qs: &[u64],
    replicates: usize,
    n_x: usize,
    seed: SeedSpec,
) -> Result<Vec<Estimate>> {
    let (lo, width, scale) = match policy {
        BorderPolicy::Full => (0.0, 1.0, 1.0),
        BorderPolicy::Borderless { eps } => (eps, 1.0 - 2.0 * eps, 1.0 - 2.0 * eps),
    };
    let sampler = prepare_shared_sampler(spec, f, seed)?;
    let d = spec.dim();
    let reps: Vec<usize> = (0..N_BATCHES)
        .map(|b| (replicates / N_BATCHES + usize::from(b < replicates % N_BATCHES)).max(1))
        .collect();
    let n_x_b = (n_x / N_BATCHES).max(1);

    let batches: Vec<Result<Vec<f64>>> = (0..N_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng_x = seed.stream(StreamKind::XDraw, 1000 + b as u64);
            let mut rng_u = seed.stream(StreamKind::ForestReplicate, 1000 + b as u64);
            let mut xs = vec![0.0; n_x_b * d];
            let mut s_vals = vec![0.0; n_x_b];
            for i in 0..n_x_b {
                for v in xs[i * d..(i + 1) * d].iter_mut() {
                    *v = lo + width * rng_x.random::<f64>();
                }
                s_vals[i] = f.eval(&xs[i * d..(i + 1) * d])?;
            }
            let q_max = *qs.last().unwrap() as usize;
            let mut acc = vec![0.0; qs.len()];
            let mut proj = vec![0.0; n_x_b];
            for _ in 0..reps[b] {
                proj.iter_mut().for_each(|v| *v = 0.0);
                let mut drawn = 0usize;
                // Nested grid: the q-tree forest reuses the first q trees,
                // which couples the rows but keeps each row unbiased.
                for (qi, &q) in qs.iter().enumerate() {
                    while drawn < q as usize {
                        let p = sampler.sample(&mut rng_u)?;
                        let mut cache = ProjectionCache::new(&p);
                        for i in 0..n_x_b {
                            proj[i] += cache.value(&p, f, &xs[i * d..(i + 1) * d])?;
                        }
                        drawn += 1;
                    }
                    let mean_err: f64 = (0..n_x_b)
                        .map(|i| {
                            let m = proj[i] / q as f64;
                            (s_vals[i] - m) * (s_vals[i] - m)
                        })
                        .sum::<f64>()
                        / n_x_b as f64;
                    acc[qi] += mean_err;
                }
                debug_assert_eq!(drawn, q_max);
            }
            Ok(acc.iter().map(|a| scale * a / reps[b] as f64).collect())
        })
        .collect();

    let mut per_q: Vec<Vec<f64>> = vec![Vec::with_capacity(N_BATCHES); qs.len()];
    for b in batches {
        for (qi, v) in b?.into_iter().enumerate() {
            per_q[qi].push(v);
        }
    }
    Ok(per_q.iter().map(|v| Estimate::from_batches(v)).collect())
}

/// Minimizer of `a x^(-alpha) + b x / n` rounded to an integer leaf count:
/// `x* = (a alpha n / b)^(1/(alpha+1))`, clamped to `[1, n]`.
pub fn select_k(a: f64, b: f64, alpha: f64, n: usize) -> Result<usize> {
    if !(a > 0.0 && b > 0.0 && alpha > 0.0 && n > 0) {
        return Err(Error::Parameter("select_k needs positive arguments".into()));
    }
    let x_star = (a * alpha * n as f64 / b).powf(1.0 / (alpha + 1.0));
    Ok((x_star.round() as usize).clamp(1, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> SeedSpec {
        SeedSpec::new(17)
    }

    #[test]
    fn select_k_examples() {
        assert_eq!(select_k(1.0, 1.0, 1.0, 100).unwrap(), 10);
        // alpha = 4: x* = 4^(1/5) * 10 at n = 1e5.
        assert_eq!(select_k(1.0, 1.0, 4.0, 100_000).unwrap(), 13);
        // k* grows like n^(1/(alpha+1)).
        let k1 = select_k(1.0, 1.0, 4.0, 100_000).unwrap();
        let k2 = select_k(1.0, 1.0, 4.0, 100_000 * 32).unwrap();
        assert!((k2 as f64 / k1 as f64 - 2.0).abs() < 0.1);
        // The objective at k* is within a factor 2 of the optimum.
        let f = |x: f64| x.powf(-4.0) + x / 1e5;
        let x_star = (4.0f64 * 1e5).powf(0.2);
        assert!(f(13.0) <= 2.0 * f(x_star));
    }

    #[test]
    fn linear_target_has_zero_interior_bias() {
        // Borderless toy bias of a linear target vanishes.
        let spec = ModelSpec::Toy { k: 16 };
        let f = RegressionFn::Sum { dim: 1 };
        let policy = BorderPolicy::borderless_default(&spec).unwrap();
        let budget = Budget { n_x: 400, n_u_tree: 200, n_u_inf: 400 };
        let r = estimate_bias(
            &spec,
            &f,
            policy,
            &[QValue::Finite(1)],
            budget,
            XIntegration::MonteCarlo,
            seed(),
        )
        .unwrap();
        assert!(
            r.b_inf.value.abs() < 3.0 * r.b_inf.stderr.max(1e-12),
            "binf = {} +- {}",
            r.b_inf.value,
            r.b_inf.stderr
        );
    }

    #[test]
    fn q_one_reproduces_single_tree_bias() {
        let spec = ModelSpec::Toy { k: 8 };
        let f = RegressionFn::Sinusoidal;
        let budget = Budget { n_x: 200, n_u_tree: 100, n_u_inf: 200 };
        let r = estimate_bias(
            &spec,
            &f,
            BorderPolicy::Full,
            &[QValue::Finite(1), QValue::Infinite],
            budget,
            XIntegration::MonteCarlo,
            seed(),
        )
        .unwrap();
        // B_1 = B_inf + V/1 holds exactly by construction.
        assert!((r.b_q[0].1.value - r.b1.value).abs() < 1e-15);
        assert_eq!(r.b_q[1].1.value, r.b_inf.value);
        // And B_1 >= B_inf within noise.
        assert!(r.b1.value + 2.0 * r.b1.stderr >= r.b_inf.value);
    }

    #[test]
    fn bias_is_deterministic() {
        let spec = ModelSpec::Purf { k: 12 };
        let f = RegressionFn::Sinusoidal;
        let budget = Budget { n_x: 100, n_u_tree: 60, n_u_inf: 100 };
        let run = || {
            estimate_bias(
                &spec,
                &f,
                BorderPolicy::Full,
                &[QValue::Finite(4)],
                budget,
                XIntegration::Stratified,
                seed(),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.b1.value.to_bits(), b.b1.value.to_bits());
        assert_eq!(a.b_inf.value.to_bits(), b.b_inf.value.to_bits());
    }

    #[test]
    fn single_cell_estimation_error_vanishes_without_noise() {
        let spec = ModelSpec::Ubprf { k: 0, dim: 1 };
        let f = RegressionFn::Sum { dim: 1 };
        let r = estimate_estimation_error(
            &spec,
            &f,
            5000,
            0.0,
            1,
            ReplicateBudget { n_replicates: 40, n_test_x: 50 },
            seed(),
        )
        .unwrap();
        // Projection equals the fit up to the sample-mean fluctuation
        // Var(s(X))/n = 1/(12 n).
        assert!(r.mc_estimate.value < 5.0 / (12.0 * 5000.0));
        assert_eq!(r.lower_bound, 0.0);
    }

    #[test]
    fn estimation_error_within_bounds() {
        let spec = ModelSpec::Toy { k: 10 };
        let f = RegressionFn::Sinusoidal;
        let r = estimate_estimation_error(
            &spec,
            &f,
            1000,
            0.25,
            1,
            ReplicateBudget { n_replicates: 100, n_test_x: 100 },
            seed(),
        )
        .unwrap();
        assert!(r.lower_bound <= r.mc_estimate.value, "{r:?}");
        assert!(r.mc_estimate.value <= r.upper_bound, "{r:?}");
        assert!(r.lipschitz_upper_bound.unwrap() >= r.mc_estimate.value);
    }

    #[test]
    fn single_cell_risk_is_target_variance() {
        let spec = ModelSpec::Ubprf { k: 0, dim: 1 };
        let f = RegressionFn::Sum { dim: 1 };
        let r = estimate_risk(
            &spec,
            &f,
            10_000,
            0.0,
            1,
            ReplicateBudget { n_replicates: 40, n_test_x: 200 },
            seed(),
        )
        .unwrap();
        // Risk of the constant projection is Var(U(0,1)) = 1/12.
        assert!(
            (r.risk.value - 1.0 / 12.0).abs() < 3.0 * r.risk.stderr,
            "risk {} +- {}",
            r.risk.value,
            r.risk.stderr
        );
        // Decomposition adds up within noise.
        let gap = r.risk.value - r.bias_part.value - r.variance_part.value;
        let se = (r.risk.stderr.powi(2) + r.bias_part.stderr.powi(2) + r.variance_part.stderr.powi(2))
            .sqrt();
        assert!(gap.abs() <= 3.0 * se.max(1e-9), "gap {gap} vs se {se}");
    }

    #[test]
    fn forest_size_examples() {
        let spec = ModelSpec::Toy { k: 8 };
        let f = RegressionFn::Sinusoidal;
        let budget = Budget { n_x: 200, n_u_tree: 200, n_u_inf: 400 };
        let grid = [QValue::Finite(1), QValue::Finite(2), QValue::Finite(8), QValue::Infinite];
        let c = forest_size_curve(&spec, &f, BorderPolicy::Full, &grid, budget, Some(400), seed())
            .unwrap();
        // Infinite entry equals b_inf.
        assert_eq!(c.rows[3].bq_identity.value, c.report.b_inf.value);
        // Identity rows decrease in q.
        assert!(c.rows[0].bq_identity.value >= c.rows[1].bq_identity.value);
        assert!(c.rows[1].bq_identity.value >= c.rows[2].bq_identity.value);
        // Direct simulation agrees with the identity within noise.
        for row in &c.rows[..3] {
            let d = row.bq_direct.unwrap();
            let tol = 4.0 * (d.stderr + row.bq_identity.stderr);
            assert!((d.value - row.bq_identity.value).abs() < tol, "{row:?}");
        }
        assert!(c.q_star.is_some());
    }

    #[test]
    fn risk_non_increasing_in_q() {
        let spec = ModelSpec::Toy { k: 8 };
        let f = RegressionFn::Sinusoidal;
        let budget = ReplicateBudget { n_replicates: 60, n_test_x: 100 };
        let r1 = estimate_risk(&spec, &f, 500, 0.25, 1, budget, seed()).unwrap();
        let r2 = estimate_risk(&spec, &f, 500, 0.25, 2, budget, seed()).unwrap();
        let se = (r1.risk.stderr.powi(2) + r2.risk.stderr.powi(2)).sqrt();
        assert!(r2.risk.value <= r1.risk.value + 2.0 * se);
    }
}
