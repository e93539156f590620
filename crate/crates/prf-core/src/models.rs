//! Samplers for the random-partition distributions: the translated-grid toy
//! model, PURF (order statistics of uniforms), balanced and unbalanced
//! recursive models, midpoint splitting with coordinate weights, and the
//! hold-out CART model built on an extra sample.
//!
//! Samplers are pure functions of `(spec, rng state)`; recursive models
//! record their split tree so point location can descend it instead of
//! scanning cells.

use crate::error::{Error, Result};
use crate::estimators::{generate_dataset, Dataset};
use crate::functions::RegressionFn;
use crate::geometry::{Partition, SplitNode, SplitTree};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Descriptor of a random-partition law.
///
/// The leaf-count parameter follows each model's natural convention: `k`
/// splits give `k + 1` leaves for `Toy`/`Purf`/`Ubprf`, depth `p` gives
/// `2^p` leaves for `Bprf`/`Midpoint`, and `Holdout` takes the target leaf
/// count directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Toy { k: usize },
    Purf { k: usize },
    Bprf { depth: usize, dim: usize },
    Ubprf { k: usize, dim: usize },
    Midpoint { depth: usize, dim: usize, weights: Vec<f64> },
    Holdout {
        leaves: usize,
        dim: usize,
        /// Size of the extra sample the partitions are grown on.
        n_prime: usize,
        /// Noise level of the extra sample's responses.
        sigma: f64,
        /// Candidate split coordinates per node; defaults to max(d/3, 1).
        mtry: Option<usize>,
    },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Toy { k } if *k < 2 => Err(Error::Parameter("toy needs k >= 2".into())),
            ModelSpec::Purf { k } if *k < 1 => Err(Error::Parameter("purf needs k >= 1".into())),
            ModelSpec::Bprf { dim, .. } | ModelSpec::Ubprf { dim, .. } if *dim < 1 => {
                Err(Error::Parameter("dimension must be >= 1".into()))
            }
            ModelSpec::Midpoint { dim, weights, .. } => {
                if *dim < 1 || weights.len() != *dim {
                    return Err(Error::Parameter("midpoint needs one weight per coordinate".into()));
                }
                if weights.iter().any(|&w| !(0.0..=1.0).contains(&w) || !w.is_finite()) {
                    return Err(Error::Parameter("midpoint weights must lie in [0,1]".into()));
                }
                if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::Parameter("midpoint weights must sum to 1".into()));
                }
                Ok(())
            }
            ModelSpec::Holdout { leaves, dim, n_prime, sigma, mtry } => {
                if *leaves < 1 {
                    return Err(Error::Parameter("holdout needs k >= 1 leaves".into()));
                }
                if *dim < 1 {
                    return Err(Error::Parameter("dimension must be >= 1".into()));
                }
                if *n_prime < *leaves {
                    return Err(Error::Parameter("holdout needs n' >= target leaves".into()));
                }
                if *sigma < 0.0 {
                    return Err(Error::Parameter("sigma must be >= 0".into()));
                }
                if let Some(m) = mtry {
                    if *m < 1 || *m > *dim {
                        return Err(Error::Parameter("mtry must satisfy 1 <= mtry <= d".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Toy { .. } | ModelSpec::Purf { .. } => 1,
            ModelSpec::Bprf { dim, .. }
            | ModelSpec::Ubprf { dim, .. }
            | ModelSpec::Midpoint { dim, .. }
            | ModelSpec::Holdout { dim, .. } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Toy { .. } => "toy",
            ModelSpec::Purf { .. } => "purf",
            ModelSpec::Bprf { .. } => "bprf",
            ModelSpec::Ubprf { .. } => "ubprf",
            ModelSpec::Midpoint { .. } => "midpoint",
            ModelSpec::Holdout { .. } => "holdout",
        }
    }

    /// The model's size parameter (`k` or depth `p`) for reports.
    pub fn size_parameter(&self) -> usize {
        match self {
            ModelSpec::Toy { k } | ModelSpec::Purf { k } | ModelSpec::Ubprf { k, .. } => *k,
            ModelSpec::Bprf { depth, .. } | ModelSpec::Midpoint { depth, .. } => *depth,
            ModelSpec::Holdout { leaves, .. } => *leaves,
        }
    }

    /// Leaf count of a sampled partition (an upper bound for `Holdout`).
    pub fn nominal_leaves(&self) -> usize {
        match self {
            ModelSpec::Toy { k } | ModelSpec::Purf { k } | ModelSpec::Ubprf { k, .. } => k + 1,
            ModelSpec::Bprf { depth, .. } | ModelSpec::Midpoint { depth, .. } => 1usize << depth,
            ModelSpec::Holdout { leaves, .. } => *leaves,
        }
    }

    /// The model's border width for borderless bias integration: `1/k` for
    /// the toy model, `4 ln(k)/k` for PURF, none elsewhere.
    pub fn default_border_eps(&self) -> Option<f64> {
        match self {
            ModelSpec::Toy { k } => Some(1.0 / *k as f64),
            ModelSpec::Purf { k } => Some(4.0 * (*k as f64).ln() / *k as f64),
            _ => None,
        }
    }

    pub fn resolved_mtry(&self) -> Option<usize> {
        match self {
            ModelSpec::Holdout { dim, mtry, .. } => Some(mtry.unwrap_or((dim / 3).max(1))),
            _ => None,
        }
    }
}

/// A prepared sampler. For the hold-out model this owns the extra sample,
/// drawn once, so repeated `sample` calls give partitions that are i.i.d.
/// conditionally on it and independent of any learning sample.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: ModelSpec,
    holdout_data: Option<Dataset>,
}

impl Sampler {
    pub fn prepare<R: Rng>(spec: &ModelSpec, f: &RegressionFn, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let holdout_data = match spec {
            ModelSpec::Holdout { dim, n_prime, sigma, .. } => {
                if f.dim() != *dim {
                    return Err(Error::DimensionMismatch { expected: *dim, got: f.dim() });
                }
                Some(generate_dataset(f, *n_prime, *sigma, rng)?)
            }
            _ => None,
        };
        Ok(Sampler { spec: spec.clone(), holdout_data })
    }

    /// Prepare a sampler for a model without a data-dependent component.
    pub fn prepare_data_free(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        if matches!(spec, ModelSpec::Holdout { .. }) {
            return Err(Error::Parameter("hold-out sampler needs a regression function".into()));
        }
        Ok(Sampler { spec: spec.clone(), holdout_data: None })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn holdout_data(&self) -> Option<&Dataset> {
        self.holdout_data.as_ref()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Partition> {
        match &self.spec {
            ModelSpec::Toy { k } => sample_toy(*k, rng),
            ModelSpec::Purf { k } => sample_purf(*k, rng),
            ModelSpec::Bprf { depth, dim } => sample_bprf(*depth, *dim, rng),
            ModelSpec::Ubprf { k, dim } => sample_ubprf(*k, *dim, rng),
            ModelSpec::Midpoint { depth, dim, weights } => sample_midpoint(*depth, *dim, weights, rng),
            ModelSpec::Holdout { leaves, dim, .. } => sample_holdout(
                *leaves,
                *dim,
                self.holdout_data.as_ref().expect("prepared hold-out sampler"),
                self.spec.resolved_mtry().unwrap(),
                rng,
            ),
        }
    }
}

/// Translated regular grid with the given shift `t` in `[0,1)`.
///
/// Breakpoints are `(i - t)/k`; when `t = 0` the last one lands on 1 and is
/// dropped, leaving `k` cells instead of `k + 1`.
pub fn toy_partition_with_shift(k: usize, t: f64) -> Result<Partition> {
    if k < 2 {
        return Err(Error::Parameter("toy needs k >= 2".into()));
    }
    if !(0.0..1.0).contains(&t) {
        return Err(Error::Parameter("shift must lie in [0,1)".into()));
    }
    let kf = k as f64;
    let breaks: Vec<f64> = (1..=k)
        .map(|i| (i as f64 - t) / kf)
        .filter(|&b| b > 0.0 && b < 1.0)
        .collect();
    Ok(Partition::from_breakpoints(breaks)?.with_grid_locator(k, t))
}

pub fn sample_toy<R: Rng>(k: usize, rng: &mut R) -> Result<Partition> {
    toy_partition_with_shift(k, rng.random::<f64>())
}

pub fn sample_purf<R: Rng>(k: usize, rng: &mut R) -> Result<Partition> {
    if k < 1 {
        return Err(Error::Parameter("purf needs k >= 1".into()));
    }
    let mut breaks: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    breaks.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    // Coincident or zero breakpoints have probability zero; drop them so the
    // partition stays strictly increasing.
    breaks.dedup();
    breaks.retain(|&b| b > 0.0);
    Partition::from_breakpoints(breaks)
}

/// Arena-based builder shared by the recursive samplers.
struct TreeBuilder {
    dim: usize,
    nodes: Vec<SplitNode>,
    /// Current leaves: (node index, lower bounds, upper bounds).
    leaves: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl TreeBuilder {
    fn new(dim: usize) -> Self {
        TreeBuilder {
            dim,
            nodes: vec![SplitNode::Leaf(u32::MAX)],
            leaves: vec![(0, vec![0.0; dim], vec![1.0; dim])],
        }
    }

    /// Split leaf `leaf_idx` at `threshold` along `coord`; returns the index
    /// of the left child in the leaf list (the right child is appended).
    fn split(&mut self, leaf_idx: usize, coord: usize, threshold: f64) {
        let (node, lo, up) = self.leaves[leaf_idx].clone();
        debug_assert!(lo[coord] < threshold && threshold < up[coord]);
        let left = self.nodes.len();
        self.nodes.push(SplitNode::Leaf(u32::MAX));
        let right = self.nodes.len();
        self.nodes.push(SplitNode::Leaf(u32::MAX));
        self.nodes[node] = SplitNode::Internal {
            coord: coord as u32,
            threshold,
            left: left as u32,
            right: right as u32,
        };
        let mut lo_right = lo.clone();
        lo_right[coord] = threshold;
        let mut up_left = up.clone();
        up_left[coord] = threshold;
        self.leaves[leaf_idx] = (left, lo, up_left);
        self.leaves.push((right, lo_right, up));
    }

    fn finish(mut self) -> Partition {
        let n = self.leaves.len();
        let mut lowers = Vec::with_capacity(n * self.dim);
        let mut uppers = Vec::with_capacity(n * self.dim);
        for (i, (node, lo, up)) in self.leaves.iter().enumerate() {
            self.nodes[*node] = SplitNode::Leaf(i as u32);
            lowers.extend_from_slice(lo);
            uppers.extend_from_slice(up);
        }
        Partition::from_flat(self.dim, lowers, uppers)
            .with_tree_locator(SplitTree { nodes: self.nodes })
    }
}

/// Uniform split point strictly inside `(lo, up)`; redraws the (measure
/// zero) degenerate outcomes so no cell collapses.
fn uniform_split<R: Rng>(lo: f64, up: f64, rng: &mut R) -> f64 {
    loop {
        let t = lo + (up - lo) * rng.random::<f64>();
        if lo < t && t < up {
            return t;
        }
    }
}

pub fn sample_bprf<R: Rng>(depth: usize, dim: usize, rng: &mut R) -> Result<Partition> {
    if dim < 1 {
        return Err(Error::Parameter("dimension must be >= 1".into()));
    }
    let mut b = TreeBuilder::new(dim);
    for _ in 0..depth {
        // Split every current leaf once.
        let level: Vec<usize> = (0..b.leaves.len()).collect();
        for leaf in level {
            let coord = rng.random_range(0..dim);
            let (_, lo, up) = &b.leaves[leaf];
            let t = uniform_split(lo[coord], up[coord], rng);
            b.split(leaf, coord, t);
        }
    }
    Ok(b.finish())
}

pub fn sample_ubprf<R: Rng>(k: usize, dim: usize, rng: &mut R) -> Result<Partition> {
    if dim < 1 {
        return Err(Error::Parameter("dimension must be >= 1".into()));
    }
    let mut b = TreeBuilder::new(dim);
    for _ in 0..k {
        let leaf = rng.random_range(0..b.leaves.len());
        let coord = rng.random_range(0..dim);
        let (_, lo, up) = &b.leaves[leaf];
        let t = uniform_split(lo[coord], up[coord], rng);
        b.split(leaf, coord, t);
    }
    Ok(b.finish())
}

pub fn sample_midpoint<R: Rng>(
    depth: usize,
    dim: usize,
    weights: &[f64],
    rng: &mut R,
) -> Result<Partition> {
    let spec = ModelSpec::Midpoint { depth, dim, weights: weights.to_vec() };
    spec.validate()?;
    let mut b = TreeBuilder::new(dim);
    for _ in 0..depth {
        let level: Vec<usize> = (0..b.leaves.len()).collect();
        for leaf in level {
            let coord = weighted_coord(weights, rng);
            let (_, lo, up) = &b.leaves[leaf];
            let t = 0.5 * (lo[coord] + up[coord]);
            b.split(leaf, coord, t);
        }
    }
    Ok(b.finish())
}

fn weighted_coord<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Round-off tail: last coordinate with positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Best split of a leaf by sum-of-squares reduction over `mtry` randomly
/// drawn coordinates; candidate thresholds are midpoints between consecutive
/// distinct sorted sample values.
fn best_split<R: Rng>(
    data: &Dataset,
    rows: &[u32],
    dim: usize,
    mtry: usize,
    rng: &mut R,
) -> Option<(f64, usize, f64)> {
    if rows.len() < 2 {
        return None;
    }
    let total: f64 = rows.iter().map(|&r| data.y(r as usize)).sum();
    let n = rows.len() as f64;
    let base = total * total / n;

    // Draw mtry distinct coordinates (partial Fisher-Yates).
    let mut coords: Vec<usize> = (0..dim).collect();
    for i in 0..mtry.min(dim) {
        let j = rng.random_range(i..dim);
        coords.swap(i, j);
    }

    let mut best: Option<(f64, usize, f64)> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for &coord in &coords[..mtry.min(dim)] {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (data.x(r as usize)[coord], data.y(r as usize))));
        pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut sum_left = 0.0;
        for i in 0..pairs.len() - 1 {
            sum_left += pairs[i].1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let n_left = (i + 1) as f64;
            let n_right = n - n_left;
            let sum_right = total - sum_left;
            let gain =
                sum_left * sum_left / n_left + sum_right * sum_right / n_right - base;
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.0) {
                best = Some((gain, coord, 0.5 * (pairs[i].0 + pairs[i + 1].0)));
            }
        }
    }
    best
}

/// Best-first CART partition grown on an extra sample: repeatedly split the
/// leaf whose best candidate split maximizes the sum-of-squares reduction,
/// until the target leaf count is reached or no leaf can be split.
pub fn sample_holdout<R: Rng>(
    leaves: usize,
    dim: usize,
    holdout_data: &Dataset,
    mtry: usize,
    rng: &mut R,
) -> Result<Partition> {
    if leaves < 1 {
        return Err(Error::Parameter("holdout needs k >= 1 leaves".into()));
    }
    if holdout_data.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: holdout_data.dim() });
    }
    if holdout_data.n() < leaves {
        return Err(Error::Parameter("holdout data has fewer points than target leaves".into()));
    }
    if mtry < 1 || mtry > dim {
        return Err(Error::Parameter("mtry must satisfy 1 <= mtry <= d".into()));
    }

    let mut b = TreeBuilder::new(dim);
    let all_rows: Vec<u32> = (0..holdout_data.n() as u32).collect();
    let mut rows: Vec<Vec<u32>> = vec![all_rows];
    let mut cands: Vec<Option<(f64, usize, f64)>> =
        vec![best_split(holdout_data, &rows[0], dim, mtry, rng)];

    while b.leaves.len() < leaves {
        // Leaf with the largest achievable reduction; ties break towards the
        // earliest-created leaf, which keeps growth deterministic.
        let Some((leaf, &(_, coord, threshold))) = cands
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
            .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap().then(b.0.cmp(&a.0)))
        else {
            break;
        };
        let parent_rows = std::mem::take(&mut rows[leaf]);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = parent_rows
            .into_iter()
            .partition(|&r| holdout_data.x(r as usize)[coord] < threshold);
        b.split(leaf, coord, threshold);
        // The left child replaces the parent slot, the right child is last.
        cands[leaf] = best_split(holdout_data, &left_rows, dim, mtry, rng);
        rows[leaf] = left_rows;
        cands.push(best_split(holdout_data, &right_rows, dim, mtry, rng));
        rows.push(right_rows);
    }
    Ok(b.finish())
}

/// Fixed-point Markov chain equivalent of the balanced recursive sampler:
/// evolves the face distances `(alpha_i, beta_i)` of the cell containing
/// `x` without materializing the partition. Used as an independent oracle
/// for the geometric sampler.
pub fn bprf_cell_chain<R: Rng>(
    x: &[f64],
    depth: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let dim = x.len();
    let mut alpha: Vec<f64> = x.to_vec();
    let mut beta: Vec<f64> = x.iter().map(|&v| 1.0 - v).collect();
    for _ in 0..depth {
        let j = rng.random_range(0..dim);
        let u: f64 = rng.random();
        let pick: f64 = rng.random();
        if pick * (alpha[j] + beta[j]) < alpha[j] {
            alpha[j] *= u;
        } else {
            beta[j] *= u;
        }
    }
    (alpha, beta)
}
