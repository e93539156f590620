//! Data generation, regressogram trees, forest averaging and the population
//! projections they estimate.

use crate::error::{Error, Result};
use crate::functions::RegressionFn;
use crate::geometry::Partition;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A learning sample `(X_i, Y_i)` with `X_i` uniform on `[0,1)^d` and
/// `Y_i = s(X_i) + sigma * N(0,1)`. Points are stored row major.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    sigma: f64,
}

impl Dataset {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>, sigma: f64) -> Result<Self> {
        if dim == 0 || xs.len() != ys.len() * dim {
            return Err(Error::Parameter("xs/ys length mismatch".into()));
        }
        if sigma < 0.0 {
            return Err(Error::Parameter("sigma must be >= 0".into()));
        }
        for (i, &v) in xs.iter().enumerate() {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::OutOfDomain { coord: i % dim, value: v });
            }
        }
        Ok(Dataset { dim, xs, ys, sigma })
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }
}

pub fn generate_dataset<R: Rng>(
    f: &RegressionFn,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Parameter("need n >= 1".into()));
    }
    if sigma < 0.0 {
        return Err(Error::Parameter("sigma must be >= 0".into()));
    }
    let d = f.dim();
    let mut xs = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = xs.len();
        for _ in 0..d {
            xs.push(rng.random::<f64>());
        }
        let mut y = f.eval(&xs[start..start + d])?;
        if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            y += sigma * z;
        }
        ys.push(y);
    }
    Dataset::new(d, xs, ys, sigma)
}

/// A regressogram: each cell carries the mean response of the sample points
/// inside it, with the 0/0 = 0 convention for empty cells.
#[derive(Debug, Clone)]
pub struct TreeEstimator {
    partition: Partition,
    leaf_values: Vec<f64>,
    empty_leaves: usize,
}

impl TreeEstimator {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    /// Number of cells that contained no sample point (their value is 0).
    pub fn empty_leaves(&self) -> usize {
        self.empty_leaves
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.leaf_values[self.partition.locate(x)?])
    }
}

pub fn fit_tree(partition: Partition, data: &Dataset) -> Result<TreeEstimator> {
    if data.dim() != partition.dim() {
        return Err(Error::DimensionMismatch { expected: partition.dim(), got: data.dim() });
    }
    let mut sums = vec![0.0; partition.n_cells()];
    let mut counts = vec![0usize; partition.n_cells()];
    for i in 0..data.n() {
        let cell = partition.locate(data.x(i))?;
        sums[cell] += data.y(i);
        counts[cell] += 1;
    }
    let mut empty = 0;
    let leaf_values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c == 0 {
                empty += 1;
                0.0
            } else {
                s / c as f64
            }
        })
        .collect();
    Ok(TreeEstimator { partition, leaf_values, empty_leaves: empty })
}

/// Arithmetic mean of regressogram trees sharing one learning sample.
#[derive(Debug, Clone)]
pub struct ForestEstimator {
    trees: Vec<TreeEstimator>,
}

impl ForestEstimator {
    pub fn new(trees: Vec<TreeEstimator>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Parameter("a forest needs q >= 1 trees".into()));
        }
        Ok(ForestEstimator { trees })
    }

    pub fn trees(&self) -> &[TreeEstimator] {
        &self.trees
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for t in &self.trees {
            acc += t.predict(x)?;
        }
        Ok(acc / self.trees.len() as f64)
    }
}

/// Per-cell conditional means `beta_cell = E[s(X) | X in cell]`.
pub fn population_projection(partition: &Partition, f: &RegressionFn) -> Result<Vec<f64>> {
    (0..partition.n_cells()).map(|i| f.cell_average(&partition.cell(i))).collect()
}

/// Value of the L2 projection of `s` onto the partition at `x`: the cell
/// average of the containing cell.
pub fn s_tilde(partition: &Partition, f: &RegressionFn, x: &[f64]) -> Result<f64> {
    let i = partition.locate(x)?;
    f.cell_average(&partition.cell(i))
}

/// Projection of the forest: mean of the per-partition projections.
pub fn s_tilde_forest(partitions: &[Partition], f: &RegressionFn, x: &[f64]) -> Result<f64> {
    if partitions.is_empty() {
        return Err(Error::Parameter("need at least one partition".into()));
    }
    let mut acc = 0.0;
    for p in partitions {
        acc += s_tilde(p, f, x)?;
    }
    Ok(acc / partitions.len() as f64)
}
