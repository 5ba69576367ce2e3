//! People-conservation constraints on a block partition of the head plane.
//!
//! The head-plane raster is tiled into square blocks. For three time instants
//! `t0 < t1 < t2`, every constrained block `k` must satisfy
//! `m_k(t1) <= U_k(t0)` and `m_k(t1) <= U_k(t2)`, where `U_k` sums the counts
//! of the 3x3 block neighborhood of `k`, `k` included. Blocks on the grid
//! border and user-marked entrances/exits are exempt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::density::{DensityMap, HeadPlaneGrid, Mask, Plane};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("expected a head-plane density map, got {0}")]
    PlaneMismatch(Plane),
    #[error("block size of {block_m} m is not a whole number of {cell_m} m cells")]
    InvalidBlockSize { block_m: f64, cell_m: f64 },
    #[error("grid of {cols}x{rows} cells is not divisible into blocks of {block_cells} cells")]
    TilingMismatch {
        cols: usize,
        rows: usize,
        block_cells: usize,
    },
    #[error("inputs are not defined on the same grid")]
    GridMismatch,
    #[error("block ({bx}, {by}) is outside the {cols}x{rows} block grid")]
    IndexOutOfRange { bx: usize, by: usize, cols: usize, rows: usize },
    #[error("invalid block counts: {0}")]
    InvalidCounts(String),
    #[error("region of interest selects no cells")]
    EmptyRegion,
}

/// Block index `(bx, by)`: column then row.
pub type BlockIndex = (usize, usize);

/// Square blocks tiling a head-plane grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    grid: HeadPlaneGrid,
    block_cells: usize,
    cols: usize,
    rows: usize,
    exempt: Vec<bool>,
}

impl BlockGrid {
    /// Blocks of side `block_m` meters. `block_m` must be a whole number of
    /// cells and the grid must divide evenly into blocks.
    pub fn new(grid: HeadPlaneGrid, block_m: f64, exempt: &[BlockIndex]) -> Result<Self, ConsistencyError> {
        let ratio = block_m / grid.cell_size;
        let cells = ratio.round();
        if !(block_m.is_finite() && block_m > 0.0) || cells < 1.0 || (ratio - cells).abs() > 1e-6 {
            return Err(ConsistencyError::InvalidBlockSize {
                block_m,
                cell_m: grid.cell_size,
            });
        }
        Self::with_block_cells(grid, cells as usize, exempt)
    }

    /// Blocks of `block_cells` x `block_cells` raster cells. On a head-plane
    /// raster built at image-equivalent resolution, 30 reproduces 30x30 pixel
    /// blocks.
    pub fn with_block_cells(
        grid: HeadPlaneGrid,
        block_cells: usize,
        exempt: &[BlockIndex],
    ) -> Result<Self, ConsistencyError> {
        if block_cells == 0 || grid.cols % block_cells != 0 || grid.rows % block_cells != 0 {
            return Err(ConsistencyError::TilingMismatch {
                cols: grid.cols,
                rows: grid.rows,
                block_cells,
            });
        }
        let (cols, rows) = (grid.cols / block_cells, grid.rows / block_cells);
        let mut flags = vec![false; cols * rows];
        for &(bx, by) in exempt {
            if bx >= cols || by >= rows {
                return Err(ConsistencyError::IndexOutOfRange { bx, by, cols, rows });
            }
            flags[by * cols + bx] = true;
        }
        Ok(Self {
            grid,
            block_cells,
            cols,
            rows,
            exempt: flags,
        })
    }

    pub fn grid(&self) -> &HeadPlaneGrid {
        &self.grid
    }

    pub fn block_cells(&self) -> usize {
        self.block_cells
    }

    pub fn block_side_m(&self) -> f64 {
        self.block_cells as f64 * self.grid.cell_size
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, (bx, by): BlockIndex) -> usize {
        by * self.cols + bx
    }

    pub fn block_at(&self, k: usize) -> BlockIndex {
        (k % self.cols, k / self.cols)
    }

    pub fn is_boundary(&self, (bx, by): BlockIndex) -> bool {
        bx == 0 || by == 0 || bx + 1 == self.cols || by + 1 == self.rows
    }

    pub fn is_exempt(&self, b: BlockIndex) -> bool {
        self.exempt[self.index(b)]
    }

    /// Interior and not marked as an entrance/exit.
    pub fn is_constrained(&self, b: BlockIndex) -> bool {
        !self.is_boundary(b) && !self.is_exempt(b)
    }

    /// Constrained blocks in row-major order.
    pub fn constrained(&self) -> impl Iterator<Item = BlockIndex> + '_ {
        (0..self.len()).map(|k| self.block_at(k)).filter(|b| self.is_constrained(*b))
    }

    pub fn constrained_count(&self) -> usize {
        self.constrained().count()
    }

    pub fn exempt_blocks(&self) -> Vec<BlockIndex> {
        (0..self.len())
            .filter(|k| self.exempt[*k])
            .map(|k| self.block_at(k))
            .collect()
    }

    /// Block containing a head-plane point.
    pub fn block_of(&self, p: &nalgebra::Point2<f64>) -> Option<BlockIndex> {
        self.grid
            .cell_of(p)
            .map(|(i, j)| (i / self.block_cells, j / self.block_cells))
    }

    fn check_index(&self, (bx, by): BlockIndex) -> Result<(), ConsistencyError> {
        if bx >= self.cols || by >= self.rows {
            Err(ConsistencyError::IndexOutOfRange {
                bx,
                by,
                cols: self.cols,
                rows: self.rows,
            })
        } else {
            Ok(())
        }
    }
}

/// People per block at one time instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub time: f64,
    cols: usize,
    rows: usize,
    counts: Vec<f64>,
}

impl BlockCounts {
    pub fn new(time: f64, cols: usize, rows: usize, counts: Vec<f64>) -> Result<Self, ConsistencyError> {
        if counts.len() != cols * rows {
            return Err(ConsistencyError::InvalidCounts(format!(
                "expected {} counts, got {}",
                cols * rows,
                counts.len()
            )));
        }
        if counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(ConsistencyError::InvalidCounts("counts must be finite and non-negative".into()));
        }
        Ok(Self {
            time,
            cols,
            rows,
            counts,
        })
    }

    pub fn zeros(time: f64, blocks: &BlockGrid) -> Self {
        Self {
            time,
            cols: blocks.cols,
            rows: blocks.rows,
            counts: vec![0.0; blocks.len()],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn get(&self, (bx, by): BlockIndex) -> f64 {
        self.counts[by * self.cols + bx]
    }

    pub fn set(&mut self, (bx, by): BlockIndex, value: f64) {
        self.counts[by * self.cols + bx] = value;
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    fn check_grid(&self, blocks: &BlockGrid) -> Result<(), ConsistencyError> {
        if self.dims() == blocks.dims() {
            Ok(())
        } else {
            Err(ConsistencyError::GridMismatch)
        }
    }
}

/// `m_k`: mass of the density map inside every block.
pub fn block_counts(map: &DensityMap, blocks: &BlockGrid) -> Result<BlockCounts, ConsistencyError> {
    block_counts_at(map, blocks, 0.0)
}

pub fn block_counts_at(map: &DensityMap, blocks: &BlockGrid, time: f64) -> Result<BlockCounts, ConsistencyError> {
    if map.plane() != Plane::Head {
        return Err(ConsistencyError::PlaneMismatch(map.plane()));
    }
    let grid = map.grid();
    if grid.cols % blocks.block_cells != 0 || grid.rows % blocks.block_cells != 0 {
        return Err(ConsistencyError::TilingMismatch {
            cols: grid.cols,
            rows: grid.rows,
            block_cells: blocks.block_cells,
        });
    }
    if !grid.same_geometry(&blocks.grid) {
        return Err(ConsistencyError::GridMismatch);
    }
    let area = map.cell_area();
    let mut counts = vec![0.0; blocks.len()];
    for (j, row) in map.values().chunks(grid.cols).enumerate() {
        let by = j / blocks.block_cells;
        for (i, v) in row.iter().enumerate() {
            counts[by * blocks.cols + i / blocks.block_cells] += v * area;
        }
    }
    Ok(BlockCounts {
        time,
        cols: blocks.cols,
        rows: blocks.rows,
        counts,
    })
}

/// Exact per-block head counts from head-plane positions. Points outside the
/// grid are ignored.
pub fn counts_from_points(points: &[nalgebra::Point2<f64>], blocks: &BlockGrid, time: f64) -> BlockCounts {
    let mut counts = BlockCounts::zeros(time, blocks);
    for p in points {
        if let Some(b) = blocks.block_of(p) {
            counts.counts[blocks.index(b)] += 1.0;
        }
    }
    counts
}

/// `U_k`: sum over the 3x3 neighborhood of `k` (clipped at the border), `k`
/// included.
pub fn neighborhood_sum(counts: &BlockCounts, blocks: &BlockGrid, k: BlockIndex) -> Result<f64, ConsistencyError> {
    counts.check_grid(blocks)?;
    blocks.check_index(k)?;
    Ok(neighborhood_sum_unchecked(counts, k))
}

fn neighborhood_sum_unchecked(counts: &BlockCounts, (bx, by): BlockIndex) -> f64 {
    let x0 = bx.saturating_sub(1);
    let y0 = by.saturating_sub(1);
    let x1 = (bx + 1).min(counts.cols - 1);
    let y1 = (by + 1).min(counts.rows - 1);
    let mut sum = 0.0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            sum += counts.counts[y * counts.cols + x];
        }
    }
    sum
}

/// Amounts by which `m_k(t1)` exceeds `U_k(t0)` and `U_k(t2)`, clipped at 0.
fn excesses(c0: &BlockCounts, c1: &BlockCounts, c2: &BlockCounts, k: BlockIndex) -> (f64, f64) {
    let m = c1.get(k);
    let prev = (m - neighborhood_sum_unchecked(c0, k)).max(0.0);
    let next = (m - neighborhood_sum_unchecked(c2, k)).max(0.0);
    (prev, next)
}

fn check_triplet(c0: &BlockCounts, c1: &BlockCounts, c2: &BlockCounts, blocks: &BlockGrid) -> Result<(), ConsistencyError> {
    c0.check_grid(blocks)?;
    c1.check_grid(blocks)?;
    c2.check_grid(blocks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `[bx, by]`.
    pub block: [usize; 2],
    pub excess_prev: f64,
    pub excess_next: f64,
}

/// Default slack: `1e-6` times the largest total mass of the triplet.
pub fn default_slack(c0: &BlockCounts, c1: &BlockCounts, c2: &BlockCounts) -> f64 {
    1e-6 * c0.total().max(c1.total()).max(c2.total())
}

/// Constrained blocks whose middle-frame count exceeds either neighborhood
/// sum by more than `slack`.
pub fn conservation_check(
    c0: &BlockCounts,
    c1: &BlockCounts,
    c2: &BlockCounts,
    blocks: &BlockGrid,
    slack: f64,
) -> Result<Vec<Violation>, ConsistencyError> {
    check_triplet(c0, c1, c2, blocks)?;
    Ok(blocks
        .constrained()
        .filter_map(|k| {
            let (prev, next) = excesses(c0, c1, c2, k);
            (prev > slack || next > slack).then_some(Violation {
                block: [k.0, k.1],
                excess_prev: prev,
                excess_next: next,
            })
        })
        .collect())
}

/// Squared-hinge temporal loss on block counts, normalized by `1 / (2K)`
/// with `K` the number of constrained blocks (0 when there are none).
pub fn temporal_loss_counts(
    c0: &BlockCounts,
    c1: &BlockCounts,
    c2: &BlockCounts,
    blocks: &BlockGrid,
) -> Result<f64, ConsistencyError> {
    check_triplet(c0, c1, c2, blocks)?;
    let mut k_count = 0usize;
    let mut sum = 0.0;
    for k in blocks.constrained() {
        let (prev, next) = excesses(c0, c1, c2, k);
        sum += prev * prev + next * next;
        k_count += 1;
    }
    if k_count == 0 {
        return Ok(0.0);
    }
    Ok(sum / (2.0 * k_count as f64))
}

pub fn temporal_loss(
    g0: &DensityMap,
    g1: &DensityMap,
    g2: &DensityMap,
    blocks: &BlockGrid,
) -> Result<f64, ConsistencyError> {
    let c0 = block_counts(g0, blocks)?;
    let c1 = block_counts(g1, blocks)?;
    let c2 = block_counts(g2, blocks)?;
    temporal_loss_counts(&c0, &c1, &c2, blocks)
}

/// Mean squared difference of density values over the ROI cells.
pub fn head_plane_loss(predicted: &DensityMap, truth: &DensityMap, roi: Option<&Mask>) -> Result<f64, ConsistencyError> {
    for map in [predicted, truth] {
        if map.plane() != Plane::Head {
            return Err(ConsistencyError::PlaneMismatch(map.plane()));
        }
    }
    if !predicted.grid().same_geometry(truth.grid()) {
        return Err(ConsistencyError::GridMismatch);
    }
    if let Some(mask) = roi {
        if mask.dims() != truth.dims() {
            return Err(ConsistencyError::GridMismatch);
        }
    }
    let mut n = 0usize;
    let mut sum = 0.0;
    for (i, (p, t)) in predicted.values().iter().zip(truth.values()).enumerate() {
        if roi.is_some_and(|m| !m.as_slice()[i]) {
            continue;
        }
        let d = p - t;
        sum += d * d;
        n += 1;
    }
    if n == 0 {
        return Err(ConsistencyError::EmptyRegion);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLoss {
    pub head_plane: f64,
    pub temporal: f64,
    pub total: f64,
}

/// Head-plane loss on the middle frame plus the temporal loss of the triplet.
/// Only the middle frame needs ground truth.
pub fn composite_loss(
    predicted: [&DensityMap; 3],
    truth_middle: &DensityMap,
    blocks: &BlockGrid,
    roi: Option<&Mask>,
) -> Result<CompositeLoss, ConsistencyError> {
    let head_plane = head_plane_loss(predicted[1], truth_middle, roi)?;
    let temporal = temporal_loss(predicted[0], predicted[1], predicted[2], blocks)?;
    Ok(CompositeLoss {
        head_plane,
        temporal,
        total: head_plane + temporal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::RasterGrid;

    fn blocks_5x4() -> BlockGrid {
        let grid = RasterGrid::new([0.0, 0.0], 0.5, 10, 8).unwrap();
        BlockGrid::new(grid, 1.0, &[]).unwrap()
    }

    fn uniform(blocks: &BlockGrid, c: f64) -> BlockCounts {
        let (cols, rows) = blocks.dims();
        BlockCounts::new(0.0, cols, rows, vec![c; cols * rows]).unwrap()
    }

    #[test]
    fn tiling_is_enforced() {
        let grid = RasterGrid::new([0.0, 0.0], 0.1, 25, 20).unwrap();
        assert!(matches!(
            BlockGrid::new(grid, 1.0, &[]),
            Err(ConsistencyError::TilingMismatch { .. })
        ));
        assert!(matches!(
            BlockGrid::new(grid, 0.25, &[]),
            Err(ConsistencyError::InvalidBlockSize { .. })
        ));
        assert!(BlockGrid::new(grid, 0.5, &[]).is_ok());
    }

    #[test]
    fn boundary_blocks_are_never_constrained() {
        let b = blocks_5x4();
        assert_eq!(b.dims(), (5, 4));
        assert_eq!(b.constrained_count(), 3 * 2);
        assert!(!b.is_constrained((0, 2)));
        assert!(!b.is_constrained((4, 1)));
        let grid = *b.grid();
        let with_exit = BlockGrid::new(grid, 1.0, &[(2, 1)]).unwrap();
        assert_eq!(with_exit.constrained_count(), 5);
        assert!(BlockGrid::new(grid, 1.0, &[(5, 0)]).is_err());
    }

    #[test]
    fn neighborhood_sums() {
        let b = blocks_5x4();
        let c = uniform(&b, 2.0);
        assert_eq!(neighborhood_sum(&c, &b, (2, 1)).unwrap(), 18.0);
        assert_eq!(neighborhood_sum(&c, &b, (0, 0)).unwrap(), 8.0);
        assert_eq!(neighborhood_sum(&c, &b, (4, 3)).unwrap(), 8.0);
        assert_eq!(neighborhood_sum(&c, &b, (2, 0)).unwrap(), 12.0);

        let mut one_hot = BlockCounts::zeros(0.0, &b);
        one_hot.set((3, 1), 4.5);
        assert_eq!(neighborhood_sum(&one_hot, &b, (2, 1)).unwrap(), 4.5);
        assert!(matches!(
            neighborhood_sum(&one_hot, &b, (5, 0)),
            Err(ConsistencyError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn teleporting_people_are_flagged() {
        let b = blocks_5x4();
        let zero = BlockCounts::zeros(0.0, &b);
        let mut mid = BlockCounts::zeros(1.0, &b);
        mid.set((2, 2), 5.0);
        let v = conservation_check(&zero, &mid, &zero, &b, 0.0).unwrap();
        assert_eq!(
            v,
            vec![Violation {
                block: [2, 2],
                excess_prev: 5.0,
                excess_next: 5.0
            }]
        );
        assert!(conservation_check(&mid, &mid, &mid, &b, 0.0).unwrap().is_empty());
        // boundary appearance is allowed
        let mut edge = BlockCounts::zeros(1.0, &b);
        edge.set((0, 2), 5.0);
        assert!(conservation_check(&zero, &edge, &zero, &b, 0.0).unwrap().is_empty());
    }

    #[test]
    fn hand_evaluated_temporal_loss() {
        // 3x3 block grid: only the center block is constrained (K = 1)
        let grid = RasterGrid::new([0.0, 0.0], 1.0, 3, 3).unwrap();
        let b = BlockGrid::with_block_cells(grid, 1, &[]).unwrap();
        assert_eq!(b.constrained_count(), 1);
        let mut c0 = BlockCounts::zeros(0.0, &b);
        c0.set((0, 0), 1.0);
        let mut c1 = BlockCounts::zeros(1.0, &b);
        c1.set((1, 1), 3.0);
        let mut c2 = BlockCounts::zeros(2.0, &b);
        c2.set((2, 1), 5.0);
        assert_eq!(temporal_loss_counts(&c0, &c1, &c2, &b).unwrap(), 2.0);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let b = blocks_5x4();
        let other = BlockCounts::new(0.0, 2, 2, vec![0.0; 4]).unwrap();
        let z = BlockCounts::zeros(0.0, &b);
        assert_eq!(
            temporal_loss_counts(&z, &other, &z, &b),
            Err(ConsistencyError::GridMismatch)
        );
        assert!(conservation_check(&z, &z, &other, &b, 0.0).is_err());
    }

    #[test]
    fn image_plane_maps_rejected() {
        let b = blocks_5x4();
        let img = DensityMap::zeros(Plane::Image, *b.grid());
        assert_eq!(block_counts(&img, &b), Err(ConsistencyError::PlaneMismatch(Plane::Image)));
    }

    #[test]
    fn head_plane_loss_examples() {
        let grid = RasterGrid::new([0.0, 0.0], 0.5, 4, 2).unwrap();
        let t = DensityMap::new(Plane::Head, grid, vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(head_plane_loss(&t, &t, None).unwrap(), 0.0);
        let shifted = t.map_values(|_, v| v + 0.25);
        assert!((head_plane_loss(&shifted, &t, None).unwrap() - 0.0625).abs() < 1e-15);
        let roi = Mask::from_fn(4, 2, |_, _| false);
        assert_eq!(head_plane_loss(&t, &t, Some(&roi)), Err(ConsistencyError::EmptyRegion));
    }
}
