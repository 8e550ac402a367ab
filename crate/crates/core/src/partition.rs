//! Data-independent partitions of the input space.
//!
//! Two families are provided: axis-aligned cube grids over ℝᵈ, and Voronoi
//! cells of a maximal `r`-packing in a bounded metric space. Both are fixed
//! before any private data is read; only the per-cell statistics depend on
//! the sample.
//!
//! A maximal packing of a continuum cannot be enumerated, so packings are
//! grown greedily over a fine, data-independent candidate net (spacing at most
//! `r/10`). Centers are pairwise at least `r` apart, and because the scan
//! rejects a candidate only when some accepted center is closer than `r`,
//! every candidate ends up within `r` of a center.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclidean, AaBox};

/// Cube side `n^(-1/(2d))` used by the grid learners.
pub fn grid_side_length(n: usize, d: usize) -> f64 {
    assert!(n >= 1 && d >= 1, "n and d must be positive");
    (n as f64).powf(-1.0 / (2.0 * d as f64))
}

/// Packing radius `n^(-1/(4d))` used by the metric learners.
pub fn packing_side_length(n: usize, d: usize) -> f64 {
    assert!(n >= 1 && d >= 1, "n and d must be positive");
    (n as f64).powf(-1.0 / (4.0 * d as f64))
}

/// Integer coordinates of a grid cube.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell(pub Vec<i64>);

/// Infinite grid of half-open cubes `[anchor + k·r, anchor + (k+1)·r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    side: f64,
    anchor: Vec<f64>,
}

impl GridPartition {
    pub fn new(side: f64, anchor: Vec<f64>) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::param(format!("grid side must be positive, got {side}")));
        }
        if anchor.is_empty() {
            return Err(Error::param("grid dimension must be positive"));
        }
        Ok(GridPartition { side, anchor })
    }

    /// Grid anchored at the origin.
    pub fn at_origin(dim: usize, side: f64) -> Result<Self> {
        Self::new(side, vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn cell_volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    pub fn cell_of(&self, x: &[f64]) -> Result<GridCell> {
        if x.len() != self.dim() {
            return Err(Error::param(format!(
                "point has dimension {}, grid has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(GridCell(
            x.iter()
                .zip(&self.anchor)
                .map(|(v, a)| ((v - a) / self.side).floor() as i64)
                .collect(),
        ))
    }

    pub fn cell_box(&self, cell: &GridCell) -> AaBox {
        let lo: Vec<f64> = cell
            .0
            .iter()
            .zip(&self.anchor)
            .map(|(k, a)| a + *k as f64 * self.side)
            .collect();
        let hi = lo.iter().map(|v| v + self.side).collect();
        AaBox::new(lo, hi).expect("grid cells are nondegenerate")
    }
}

/// A grid restricted to the cells meeting `[0,1]^d`, anchored at the origin.
///
/// Cell indices are clamped into `0..cells_per_axis`, so the closed upper
/// face of the unit cube (and anything outside it) lands in a boundary cell
/// and every query has a cell.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitCubeGrid {
    grid: GridPartition,
    cells_per_axis: i64,
}

impl UnitCubeGrid {
    pub fn new(dim: usize, side: f64) -> Result<Self> {
        let grid = GridPartition::at_origin(dim, side)?;
        // tolerate round-off in 1/side (e.g. n = 100 gives side 0.1)
        let k = ((1.0 / side) * (1.0 - 1e-12)).ceil().max(1.0) as i64;
        Ok(UnitCubeGrid {
            grid,
            cells_per_axis: k,
        })
    }

    pub fn grid(&self) -> &GridPartition {
        &self.grid
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis as usize
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis().pow(self.grid.dim() as u32)
    }

    /// Cells in lexicographic order (last axis varies fastest).
    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        let d = self.grid.dim();
        let k = self.cells_per_axis;
        (0..self.num_cells()).map(move |mut flat| {
            let mut idx = vec![0i64; d];
            for slot in idx.iter_mut().rev() {
                *slot = flat as i64 % k;
                flat /= k as usize;
            }
            GridCell(idx)
        })
    }
}

/// Something that assigns every point of its domain to exactly one cell.
pub trait CellPartition {
    type Cell: Ord + Clone + Debug;

    fn dim(&self) -> usize;

    /// Cell containing `x`. Panics if `x` has the wrong dimension.
    fn locate(&self, x: &[f64]) -> Self::Cell;
}

impl CellPartition for UnitCubeGrid {
    type Cell = GridCell;

    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn locate(&self, x: &[f64]) -> GridCell {
        let mut cell = self.grid.cell_of(x).expect("dimension mismatch");
        for v in cell.0.iter_mut() {
            *v = (*v).clamp(0, self.cells_per_axis - 1);
        }
        cell
    }
}

impl CellPartition for GridPartition {
    type Cell = GridCell;

    fn dim(&self) -> usize {
        GridPartition::dim(self)
    }

    fn locate(&self, x: &[f64]) -> GridCell {
        self.cell_of(x).expect("dimension mismatch")
    }
}

/// The bundled bounded metric spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceDescriptor {
    /// `[0,1]^dim` with the Euclidean metric.
    UnitCube { dim: usize },
    /// The unit circle, points given by angle in `[0, 2π)`, arc-length metric.
    Circle,
}

/// Upper bound on candidate-net size before a packing is attempted.
pub const MAX_CANDIDATES: usize = 5_000_000;

/// Default cap on the number of packing centers.
pub const MAX_CENTERS: usize = 1 << 20;

impl SpaceDescriptor {
    pub fn name(&self) -> String {
        match self {
            SpaceDescriptor::UnitCube { dim } => format!("unit-cube-{dim}"),
            SpaceDescriptor::Circle => "circle".to_string(),
        }
    }

    /// Coordinate dimension of points; also the doubling-dimension proxy used
    /// to choose the packing radius.
    pub fn dim(&self) -> usize {
        match self {
            SpaceDescriptor::UnitCube { dim } => *dim,
            SpaceDescriptor::Circle => 1,
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            SpaceDescriptor::UnitCube { .. } => euclidean(a, b),
            SpaceDescriptor::Circle => {
                let d = (a[0] - b[0]).abs().rem_euclid(2.0 * PI);
                d.min(2.0 * PI - d)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            SpaceDescriptor::UnitCube { dim } => {
                x.len() == *dim && x.iter().all(|v| (0.0..=1.0).contains(v))
            }
            SpaceDescriptor::Circle => x.len() == 1 && (0.0..2.0 * PI).contains(&x[0]),
        }
    }

    /// Number of net steps per axis for radius `r` (spacing ≤ r/10).
    fn net_steps(&self, r: f64) -> usize {
        match self {
            SpaceDescriptor::UnitCube { .. } => (10.0 / r).ceil() as usize,
            SpaceDescriptor::Circle => (20.0 * PI / r).ceil() as usize,
        }
    }

    pub fn net_spacing(&self, r: f64) -> f64 {
        match self {
            SpaceDescriptor::UnitCube { .. } => 1.0 / self.net_steps(r) as f64,
            SpaceDescriptor::Circle => 2.0 * PI / self.net_steps(r) as f64,
        }
    }

    pub fn candidate_net_len(&self, r: f64) -> usize {
        let m = self.net_steps(r);
        match self {
            SpaceDescriptor::UnitCube { dim } => (m + 1).saturating_pow(*dim as u32),
            SpaceDescriptor::Circle => m,
        }
    }

    /// Fixed candidate net for radius `r`, in scan order.
    pub fn candidate_net(&self, r: f64) -> Result<Vec<Vec<f64>>> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::param(format!("radius must be positive, got {r}")));
        }
        let len = self.candidate_net_len(r);
        if len > MAX_CANDIDATES {
            return Err(Error::Capacity {
                what: "candidate points",
                cap: MAX_CANDIDATES,
            });
        }
        let m = self.net_steps(r);
        Ok(match self {
            SpaceDescriptor::UnitCube { dim } => {
                let per = m + 1;
                (0..len)
                    .map(|mut flat| {
                        let mut p = vec![0.0; *dim];
                        for slot in p.iter_mut().rev() {
                            *slot = (flat % per) as f64 / m as f64;
                            flat /= per;
                        }
                        p
                    })
                    .collect()
            }
            SpaceDescriptor::Circle => (0..m)
                .map(|k| vec![2.0 * PI * k as f64 / m as f64])
                .collect(),
        })
    }
}

/// Voronoi partition induced by a packing of a bounded metric space.
#[derive(Clone, Debug)]
pub struct MetricPartition {
    space: SpaceDescriptor,
    centers: Vec<Vec<f64>>,
    radius: f64,
    index: Option<BucketIndex>,
}

impl PartialEq for MetricPartition {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.centers == other.centers && self.radius == other.radius
    }
}

/// Greedy maximal `r`-packing over the space's candidate net.
pub fn build_maximal_packing(space: &SpaceDescriptor, r: f64) -> Result<MetricPartition> {
    build_maximal_packing_capped(space, r, MAX_CENTERS)
}

pub fn build_maximal_packing_capped(
    space: &SpaceDescriptor,
    r: f64,
    max_centers: usize,
) -> Result<MetricPartition> {
    if let SpaceDescriptor::Circle = space {
        return circle_packing(r, max_centers);
    }
    let net = space.candidate_net(r)?;
    build_maximal_packing_from(space, &net, r, max_centers)
}

/// `⌊2π/r⌋` equally spaced angles: spacing lies in `[r, 2r)`, so every
/// point of the circle is within `r` of a center.
fn circle_packing(r: f64, max_centers: usize) -> Result<MetricPartition> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::param(format!("radius must be positive, got {r}")));
    }
    let k = ((2.0 * PI / r).floor() as usize).max(1);
    if k > max_centers {
        return Err(Error::Capacity {
            what: "packing centers",
            cap: max_centers,
        });
    }
    let centers = (0..k).map(|i| vec![2.0 * PI * i as f64 / k as f64]).collect();
    MetricPartition::from_centers(SpaceDescriptor::Circle, centers, r)
}

/// Greedy scan of an explicit candidate list: a candidate is accepted iff no
/// accepted center is closer than `r`.
pub fn build_maximal_packing_from(
    space: &SpaceDescriptor,
    candidates: &[Vec<f64>],
    r: f64,
    max_centers: usize,
) -> Result<MetricPartition> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::param(format!("radius must be positive, got {r}")));
    }
    if candidates.is_empty() {
        return Err(Error::param("candidate net is empty"));
    }
    let mut centers: Vec<Vec<f64>> = Vec::new();
    match space {
        SpaceDescriptor::UnitCube { dim } => {
            let mut index = BucketIndex::new(*dim, r);
            for c in candidates {
                if index.any_within(&centers, c, r) {
                    continue;
                }
                if centers.len() == max_centers {
                    return Err(Error::Capacity {
                        what: "packing centers",
                        cap: max_centers,
                    });
                }
                index.insert(c, centers.len());
                centers.push(c.clone());
            }
            Ok(MetricPartition {
                space: space.clone(),
                centers,
                radius: r,
                index: Some(index),
            })
        }
        SpaceDescriptor::Circle => {
            for c in candidates {
                if centers.iter().any(|p| space.distance(p, c) < r) {
                    continue;
                }
                if centers.len() == max_centers {
                    return Err(Error::Capacity {
                        what: "packing centers",
                        cap: max_centers,
                    });
                }
                centers.push(c.clone());
            }
            Ok(MetricPartition {
                space: space.clone(),
                centers,
                radius: r,
                index: None,
            })
        }
    }
}

impl MetricPartition {
    /// Rebuilds a partition from an explicit center list (e.g. a parsed file).
    pub fn from_centers(space: SpaceDescriptor, centers: Vec<Vec<f64>>, radius: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::param("a partition needs at least one center"));
        }
        if !(radius > 0.0) {
            return Err(Error::param(format!("radius must be positive, got {radius}")));
        }
        if centers.iter().any(|c| c.len() != space.dim()) {
            return Err(Error::param("center dimension does not match the space"));
        }
        let index = match space {
            SpaceDescriptor::UnitCube { dim } => {
                let mut idx = BucketIndex::new(dim, radius);
                for (i, c) in centers.iter().enumerate() {
                    idx.insert(c, i);
                }
                Some(idx)
            }
            SpaceDescriptor::Circle => None,
        };
        Ok(MetricPartition {
            space,
            centers,
            radius,
            index,
        })
    }

    pub fn space(&self) -> &SpaceDescriptor {
        &self.space
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Index of the nearest center; ties go to the lowest index.
    pub fn voronoi_cell(&self, x: &[f64]) -> usize {
        if let Some(index) = &self.index {
            if let Some(best) = index.nearest_within(&self.centers, x, self.radius) {
                return best;
            }
        }
        self.nearest_linear(x)
    }

    fn nearest_linear(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centers.iter().enumerate() {
            let d = self.space.distance(c, x);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    // Brute-force oracles. These never use the bucket index.

    /// Smallest pairwise distance between centers (∞ for one center).
    pub fn min_center_separation(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.centers.len() {
            for j in i + 1..self.centers.len() {
                m = m.min(self.space.distance(&self.centers[i], &self.centers[j]));
            }
        }
        m
    }

    /// Largest distance from a point to its closest center.
    pub fn cover_radius(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .map(|p| {
                self.centers
                    .iter()
                    .map(|c| self.space.distance(c, p))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// Largest distance between two of `points` that share a Voronoi cell.
    pub fn max_cell_diameter(&self, points: &[Vec<f64>]) -> f64 {
        let mut by_cell: HashMap<usize, Vec<&Vec<f64>>> = HashMap::new();
        for p in points {
            by_cell.entry(self.nearest_linear(p)).or_default().push(p);
        }
        let mut worst: f64 = 0.0;
        for members in by_cell.values() {
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    worst = worst.max(self.space.distance(members[i], members[j]));
                }
            }
        }
        worst
    }

    /// Number of centers within distance `theta` of `x`.
    pub fn centers_in_ball(&self, x: &[f64], theta: f64) -> usize {
        self.centers
            .iter()
            .filter(|c| self.space.distance(c, x) <= theta)
            .count()
    }
}

impl CellPartition for MetricPartition {
    type Cell = usize;

    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn locate(&self, x: &[f64]) -> usize {
        assert_eq!(x.len(), self.space.dim(), "dimension mismatch");
        self.voronoi_cell(x)
    }
}

/// Uniform buckets of side `r` over Euclidean space.
#[derive(Clone, Debug)]
struct BucketIndex {
    dim: usize,
    side: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl BucketIndex {
    fn new(dim: usize, side: f64) -> Self {
        BucketIndex {
            dim,
            side,
            buckets: HashMap::new(),
        }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.side).floor() as i64).collect()
    }

    fn insert(&mut self, x: &[f64], id: usize) {
        let k = self.key(x);
        self.buckets.entry(k).or_default().push(id);
    }

    /// Ids in the 3^d block of buckets around `x`.
    fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let base = self.key(x);
        let mut out = Vec::new();
        let mut offset = vec![-1i64; self.dim];
        let mut probe = base.clone();
        loop {
            for i in 0..self.dim {
                probe[i] = base[i] + offset[i];
            }
            if let Some(ids) = self.buckets.get(&probe) {
                out.extend_from_slice(ids);
            }
            // odometer over {-1,0,1}^d
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    return out;
                }
                offset[axis] += 1;
                if offset[axis] <= 1 {
                    break;
                }
                offset[axis] = -1;
                axis += 1;
            }
        }
    }

    /// Any stored center strictly closer than `r` (requires `r ≤ side`).
    fn any_within(&self, centers: &[Vec<f64>], x: &[f64], r: f64) -> bool {
        self.neighbours(x)
            .into_iter()
            .any(|i| euclidean(&centers[i], x) < r)
    }

    /// Nearest center with lowest-index tie-break, provided some center lies
    /// within `r`; all such centers sit in the neighbouring buckets.
    fn nearest_within(&self, centers: &[Vec<f64>], x: &[f64], r: f64) -> Option<usize> {
        let mut ids = self.neighbours(x);
        ids.sort_unstable();
        let mut best: Option<(usize, f64)> = None;
        for i in ids {
            let d = euclidean(&centers[i], x);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.filter(|(_, d)| *d <= r).map(|(i, _)| i)
    }
}
