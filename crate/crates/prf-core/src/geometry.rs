//! Axis-aligned half-open cells and measurable partitions of the unit cube.
//!
//! The domain is always `[0,1)^d` and every cell is a product of half-open
//! intervals `[A_i, B_i)`, so a boundary point belongs to the cell on its
//! right and point location has no ties to break.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Cells with smaller volume are rejected at construction; deep recursive
/// partitions shrink geometrically and must not underflow to zero width.
pub const MIN_VOLUME: f64 = 1e-300;

/// One half-open hyperrectangle `prod_i [lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Cell {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Parameter("cell bounds must be non-empty and of equal length".into()));
        }
        for i in 0..lower.len() {
            if !(0.0 <= lower[i] && lower[i] < upper[i] && upper[i] <= 1.0) {
                return Err(Error::Parameter(format!(
                    "cell side {i} = [{}, {}) is not a sub-interval of [0,1)",
                    lower[i], upper[i]
                )));
            }
        }
        let cell = Cell { lower, upper };
        if cell.volume() < MIN_VOLUME {
            return Err(Error::Parameter(format!(
                "cell volume {} underflows the {MIN_VOLUME} floor",
                cell.volume()
            )));
        }
        Ok(cell)
    }

    /// The full cube `[0,1)^d`.
    pub fn unit(dim: usize) -> Self {
        Cell {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&lo, &hi))| lo <= xi && xi < hi)
    }

    /// Squared L2 diameter, `sum_i side_i^2`.
    pub fn diam2(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i).powi(2)).sum()
    }

    /// Per-coordinate distances `(alpha_i, beta_i) = (x_i - A_i, B_i - x_i)`
    /// to the cell faces. The point must lie in the cell.
    pub fn bounds_at(&self, x: &[f64]) -> Vec<(f64, f64)> {
        debug_assert!(self.contains(x));
        (0..self.dim())
            .map(|i| (x[i] - self.lower[i], self.upper[i] - x[i]))
            .collect()
    }
}

/// Recorded binary split tree, used as the fast point-location path for
/// recursively built partitions.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitNode {
    Internal { coord: u32, threshold: f64, left: u32, right: u32 },
    Leaf(u32),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitTree {
    pub nodes: Vec<SplitNode>,
}

impl SplitTree {
    fn descend(&self, x: &[f64]) -> usize {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                SplitNode::Leaf(cell) => return cell as usize,
                SplitNode::Internal { coord, threshold, left, right } => {
                    node = if x[coord as usize] < threshold { left as usize } else { right as usize };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Locator {
    /// Linear scan over the cells; always correct, used as the oracle.
    Scan,
    /// Translated regular grid of step 1/k (one-dimensional).
    Grid { k: usize, shift: f64 },
    /// Binary search over sorted interior breakpoints (one-dimensional).
    Breakpoints(Vec<f64>),
    /// Descent of a recorded split tree.
    Tree(SplitTree),
}

/// A measurable partition of `[0,1)^d` into half-open hyperrectangles.
///
/// Cell bounds are stored flat (`n_cells x dim`, row major) so that sampling
/// hundreds of thousands of partitions does not allocate per cell. Immutable
/// after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    dim: usize,
    lowers: Vec<f64>,
    uppers: Vec<f64>,
    locator: Locator,
}

impl Partition {
    /// Build from explicit cells with the scan locator. Validates the
    /// volume-additivity invariant.
    pub fn from_cells(cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Parameter("a partition needs at least one cell".into()));
        }
        let dim = cells[0].dim();
        let mut lowers = Vec::with_capacity(cells.len() * dim);
        let mut uppers = Vec::with_capacity(cells.len() * dim);
        for c in &cells {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
            }
            lowers.extend_from_slice(c.lower());
            uppers.extend_from_slice(c.upper());
        }
        let p = Partition { dim, lowers, uppers, locator: Locator::Scan };
        p.check_volume()?;
        Ok(p)
    }

    /// One-dimensional partition from sorted interior breakpoints in (0,1).
    pub(crate) fn from_breakpoints(breaks: Vec<f64>) -> Result<Self> {
        let mut lowers = Vec::with_capacity(breaks.len() + 1);
        let mut uppers = Vec::with_capacity(breaks.len() + 1);
        let mut prev = 0.0;
        for &b in &breaks {
            if !(prev < b && b < 1.0) {
                return Err(Error::Parameter(format!("breakpoint {b} not strictly increasing in (0,1)")));
            }
            lowers.push(prev);
            uppers.push(b);
            prev = b;
        }
        lowers.push(prev);
        uppers.push(1.0);
        Ok(Partition { dim: 1, lowers, uppers, locator: Locator::Breakpoints(breaks) })
    }

    pub(crate) fn with_grid_locator(mut self, k: usize, shift: f64) -> Self {
        self.locator = Locator::Grid { k, shift };
        self
    }

    pub(crate) fn with_tree_locator(mut self, tree: SplitTree) -> Self {
        self.locator = Locator::Tree(tree);
        self
    }

    pub(crate) fn from_flat(dim: usize, lowers: Vec<f64>, uppers: Vec<f64>) -> Self {
        Partition { dim, lowers, uppers, locator: Locator::Scan }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.lowers.len() / self.dim
    }

    pub fn cell_lower(&self, i: usize) -> &[f64] {
        &self.lowers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell_upper(&self, i: usize) -> &[f64] {
        &self.uppers[i * self.dim..(i + 1) * self.dim]
    }

    /// Owned copy of cell `i`.
    pub fn cell(&self, i: usize) -> Cell {
        Cell {
            lower: self.cell_lower(i).to_vec(),
            upper: self.cell_upper(i).to_vec(),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells()).map(|i| self.cell(i))
    }

    pub fn cell_volume(&self, i: usize) -> f64 {
        let (lo, up) = (self.cell_lower(i), self.cell_upper(i));
        (0..self.dim).map(|j| up[j] - lo[j]).product()
    }

    pub fn cell_diam2(&self, i: usize) -> f64 {
        let (lo, up) = (self.cell_lower(i), self.cell_upper(i));
        (0..self.dim).map(|j| (up[j] - lo[j]).powi(2)).sum()
    }

    fn cell_contains(&self, i: usize, x: &[f64]) -> bool {
        let (lo, up) = (self.cell_lower(i), self.cell_upper(i));
        (0..self.dim).all(|j| lo[j] <= x[j] && x[j] < up[j])
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        for (i, &xi) in x.iter().enumerate() {
            if !(0.0..1.0).contains(&xi) {
                return Err(Error::OutOfDomain { coord: i, value: xi });
            }
        }
        Ok(())
    }

    /// Index of the unique cell containing `x`, via the model's fast path.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        self.check_point(x)?;
        let idx = match &self.locator {
            Locator::Scan => return self.locate_scan_unchecked(x),
            Locator::Grid { k, shift } => {
                // Nominal index floor(k x + T); nudge across stored bounds to
                // absorb the floating-point mismatch between the arithmetic
                // and the recorded breakpoints.
                let mut i = ((*k as f64) * x[0] + shift).floor() as isize;
                i = i.clamp(0, self.n_cells() as isize - 1);
                let mut i = i as usize;
                while i + 1 < self.n_cells() && x[0] >= self.cell_upper(i)[0] {
                    i += 1;
                }
                while i > 0 && x[0] < self.cell_lower(i)[0] {
                    i -= 1;
                }
                i
            }
            Locator::Breakpoints(breaks) => breaks.partition_point(|&b| b <= x[0]),
            Locator::Tree(tree) => tree.descend(x),
        };
        if self.cell_contains(idx, x) {
            Ok(idx)
        } else {
            Err(Error::Invariant(format!("fast-path location failed at {x:?}")))
        }
    }

    /// Reference point location by linear scan.
    pub fn locate_scan(&self, x: &[f64]) -> Result<usize> {
        self.check_point(x)?;
        self.locate_scan_unchecked(x)
    }

    fn locate_scan_unchecked(&self, x: &[f64]) -> Result<usize> {
        (0..self.n_cells())
            .find(|&i| self.cell_contains(i, x))
            .ok_or_else(|| Error::Invariant(format!("no cell contains {x:?}")))
    }

    /// Per-coordinate `(alpha_i, beta_i) = (x_i - A_i, B_i - x_i)` of the
    /// containing cell.
    pub fn cell_bounds_at(&self, x: &[f64]) -> Result<Vec<(f64, f64)>> {
        let i = self.locate(x)?;
        let (lo, up) = (self.cell_lower(i), self.cell_upper(i));
        Ok((0..self.dim).map(|j| (x[j] - lo[j], up[j] - x[j])).collect())
    }

    fn check_volume(&self) -> Result<()> {
        let total: f64 = (0..self.n_cells()).map(|i| self.cell_volume(i)).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!("cell volumes sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Volume additivity plus per-cell validity; used by the sampler tests.
    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.n_cells() {
            let (lo, up) = (self.cell_lower(i), self.cell_upper(i));
            for j in 0..self.dim {
                if !(0.0 <= lo[j] && lo[j] < up[j] && up[j] <= 1.0) {
                    return Err(Error::Invariant(format!("cell {i} side {j} is degenerate")));
                }
            }
            if self.cell_volume(i) < MIN_VOLUME {
                return Err(Error::Invariant(format!("cell {i} volume underflow")));
            }
        }
        self.check_volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cell() -> Partition {
        Partition::from_cells(vec![Cell::unit(1)]).unwrap()
    }

    #[test]
    fn locate_single_cell() {
        let p = single_cell();
        assert_eq!(p.locate(&[0.7]).unwrap(), 0);
    }

    #[test]
    fn locate_rejects_out_of_domain() {
        let p = single_cell();
        assert!(matches!(p.locate(&[1.0]), Err(Error::OutOfDomain { coord: 0, .. })));
        assert!(matches!(p.locate(&[-0.1]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn boundary_point_belongs_to_right_cell() {
        // Toy partition with k=2, T=0: cells {[0,0.5), [0.5,1)}.
        let p = Partition::from_breakpoints(vec![0.5]).unwrap();
        assert_eq!(p.locate(&[0.5]).unwrap(), 1);
        assert_eq!(p.locate_scan(&[0.5]).unwrap(), 1);
    }

    #[test]
    fn locate_2d_boundary() {
        let cells = vec![
            Cell::new(vec![0.0, 0.0], vec![0.3, 1.0]).unwrap(),
            Cell::new(vec![0.3, 0.0], vec![1.0, 1.0]).unwrap(),
        ];
        let p = Partition::from_cells(cells).unwrap();
        assert_eq!(p.locate(&[0.3, 0.9]).unwrap(), 1);
    }

    #[test]
    fn bounds_at_single_cell() {
        let p = single_cell();
        assert_eq!(p.cell_bounds_at(&[0.25]).unwrap(), vec![(0.25, 0.75)]);
    }

    #[test]
    fn bounds_at_2d() {
        let cells = vec![
            Cell::new(vec![0.0, 0.25], vec![0.5, 1.0]).unwrap(),
            Cell::new(vec![0.0, 0.0], vec![0.5, 0.25]).unwrap(),
            Cell::new(vec![0.5, 0.0], vec![1.0, 1.0]).unwrap(),
        ];
        let p = Partition::from_cells(cells).unwrap();
        let b = p.cell_bounds_at(&[0.1, 0.5]).unwrap();
        assert!((b[0].0 - 0.1).abs() < 1e-15 && (b[0].1 - 0.4).abs() < 1e-15);
        assert!((b[1].0 - 0.25).abs() < 1e-15 && (b[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn volume_mismatch_is_rejected() {
        let cells = vec![Cell::new(vec![0.0], vec![0.5]).unwrap()];
        assert!(matches!(Partition::from_cells(cells), Err(Error::Invariant(_))));
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        assert!(Cell::new(vec![0.4], vec![0.4]).is_err());
        assert!(Cell::new(vec![0.0], vec![1.0 + 1e-9]).is_err());
    }
}
