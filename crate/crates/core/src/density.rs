//! Private histogram density estimation.
//!
//! [`pcde_fit`] runs the stability-based histogram over a cube grid of side
//! `n^(-1/(2d))` and rescales each surviving count by `1/(n r^d)`. The raw
//! output need not integrate to one; [`normalize_density`] clips and
//! rescales it. Distances are computed exactly, cell by cell, against any
//! piecewise-constant reference.

use std::collections::BTreeMap;

use crate::dp::{stable_histogram, PrivacyBudget};
use crate::error::{Error, Result};
use crate::geometry::AaBox;
use crate::partition::{grid_side_length, GridCell, GridPartition};
use crate::rng::SeededRng;
use crate::synthetic::SyntheticDistribution;

/// Sparse piecewise-constant function on a cube grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantDensity {
    grid: GridPartition,
    values: BTreeMap<GridCell, f64>,
    fallback: bool,
}

impl PiecewiseConstantDensity {
    pub fn new(grid: GridPartition, values: BTreeMap<GridCell, f64>) -> Result<Self> {
        if values.keys().any(|c| c.0.len() != grid.dim()) {
            return Err(Error::param("cell id dimension does not match the grid"));
        }
        if values.values().any(|v| !v.is_finite()) {
            return Err(Error::param("density values must be finite"));
        }
        Ok(PiecewiseConstantDensity {
            grid,
            values,
            fallback: false,
        })
    }

    pub fn grid(&self) -> &GridPartition {
        &self.grid
    }

    pub fn values(&self) -> &BTreeMap<GridCell, f64> {
        &self.values
    }

    pub(crate) fn with_fallback_flag(mut self, fallback: bool) -> Self {
        self.fallback = fallback;
        self
    }

    /// True when this is the uniform stand-in for a degenerate estimate.
    pub fn is_fallback(&self) -> bool {
        self.fallback
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.grid
            .cell_of(x)
            .ok()
            .and_then(|c| self.values.get(&c).copied())
            .unwrap_or(0.0)
    }

    /// `∫ f`.
    pub fn mass(&self) -> f64 {
        self.values.values().sum::<f64>() * self.grid.cell_volume()
    }

    /// Bounding box of the stored cells.
    pub fn support_hint(&self) -> Option<AaBox> {
        let d = self.grid.dim();
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        for c in self.values.keys() {
            for i in 0..d {
                lo[i] = lo[i].min(c.0[i]);
                hi[i] = hi[i].max(c.0[i]);
            }
        }
        if self.values.is_empty() {
            return None;
        }
        let lo_box = self.grid.cell_box(&GridCell(lo));
        let hi_box = self.grid.cell_box(&GridCell(hi));
        AaBox::new(lo_box.lo().to_vec(), hi_box.hi().to_vec()).ok()
    }

    pub fn pieces(&self) -> impl Iterator<Item = (AaBox, f64)> + '_ {
        self.values
            .iter()
            .map(|(c, v)| (self.grid.cell_box(c), *v))
    }
}

/// A function that is constant on finitely many disjoint boxes and zero
/// elsewhere.
pub trait PiecewiseReference {
    fn pieces(&self) -> Vec<(AaBox, f64)>;
}

impl PiecewiseReference for PiecewiseConstantDensity {
    fn pieces(&self) -> Vec<(AaBox, f64)> {
        PiecewiseConstantDensity::pieces(self).collect()
    }
}

impl PiecewiseReference for SyntheticDistribution {
    fn pieces(&self) -> Vec<(AaBox, f64)> {
        self.density_pieces()
    }
}

/// Raw private density estimate; `(ε, δ)`-DP.
pub fn pcde_fit(
    points: &[Vec<f64>],
    budget: &PrivacyBudget,
    rng: &mut SeededRng,
) -> Result<PiecewiseConstantDensity> {
    let (grid, n) = pcde_grid(points)?;
    if budget.delta() <= 0.0 {
        return Err(Error::param("PCDE needs delta > 0"));
    }
    let cells = points
        .iter()
        .map(|x| grid.cell_of(x))
        .collect::<Result<Vec<_>>>()?;
    let hist = stable_histogram(cells, budget, rng)?;
    let scale = 1.0 / (n as f64 * grid.cell_volume());
    let values = hist.into_entries().into_iter().map(|(c, v)| (c, v * scale)).collect();
    PiecewiseConstantDensity::new(grid, values)
}

fn pcde_grid(points: &[Vec<f64>]) -> Result<(GridPartition, usize)> {
    let d = match points.first() {
        Some(p) if !p.is_empty() => p.len(),
        _ => return Err(Error::input("density estimation needs at least one point")),
    };
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::input("points must share one dimension"));
    }
    let n = points.len();
    Ok((GridPartition::at_origin(d, grid_side_length(n, d))?, n))
}

/// Non-private histogram estimate on the same grid [`pcde_fit`] would use.
pub fn histogram_density(points: &[Vec<f64>]) -> Result<PiecewiseConstantDensity> {
    let (grid, n) = pcde_grid(points)?;
    let mut values = BTreeMap::new();
    let w = 1.0 / (n as f64 * grid.cell_volume());
    for x in points {
        *values.entry(grid.cell_of(x)?).or_insert(0.0) += w;
    }
    PiecewiseConstantDensity::new(grid, values)
}

/// Clips negative values and rescales to unit mass.
pub fn normalize_density(raw: &PiecewiseConstantDensity) -> Result<PiecewiseConstantDensity> {
    let kept: BTreeMap<GridCell, f64> = raw
        .values
        .iter()
        .filter(|(_, v)| **v > 0.0)
        .map(|(c, v)| (c.clone(), *v))
        .collect();
    let mass = kept.values().sum::<f64>() * raw.grid.cell_volume();
    if !(mass > 0.0) {
        return Err(Error::Degenerate(
            "no cell has positive density after clipping".into(),
        ));
    }
    let values = kept.into_iter().map(|(c, v)| (c, v / mass)).collect();
    Ok(PiecewiseConstantDensity {
        grid: raw.grid.clone(),
        values,
        fallback: false,
    })
}

/// [`normalize_density`], falling back to the uniform density on the unit
/// cube at the grid anchor when nothing survives. The fallback is flagged.
pub fn normalize_or_uniform(raw: &PiecewiseConstantDensity) -> PiecewiseConstantDensity {
    normalize_density(raw).unwrap_or_else(|_| {
        let d = raw.grid.dim();
        let grid = GridPartition::new(1.0, raw.grid.anchor().to_vec()).expect("unit side");
        PiecewiseConstantDensity {
            grid,
            values: BTreeMap::from([(GridCell(vec![0; d]), 1.0)]),
            fallback: true,
        }
    })
}

/// Exact `∫ |f − g|`.
pub fn l1_distance(f: &PiecewiseConstantDensity, g: &impl PiecewiseReference) -> f64 {
    l1_between(&PiecewiseReference::pieces(f), &g.pieces(), None)
}

/// Exact `∫_region |f − g|`.
pub fn l1_distance_within(
    f: &PiecewiseConstantDensity,
    g: &impl PiecewiseReference,
    region: &AaBox,
) -> f64 {
    l1_between(&PiecewiseReference::pieces(f), &g.pieces(), Some(region))
}

/// `∫_R |f − g|` for two piecewise-constant functions on disjoint boxes:
/// overlaps contribute `|a − b|`, the parts of each piece not covered by the
/// other function contribute its own absolute value.
fn l1_between(f: &[(AaBox, f64)], g: &[(AaBox, f64)], region: Option<&AaBox>) -> f64 {
    let clip = |pieces: &[(AaBox, f64)]| -> Vec<(AaBox, f64)> {
        match region {
            None => pieces.to_vec(),
            Some(r) => pieces
                .iter()
                .filter_map(|(b, v)| b.intersect(r).map(|c| (c, *v)))
                .collect(),
        }
    };
    let f = clip(f);
    let g = clip(g);
    let mut g_covered = vec![0.0; g.len()];
    let mut total = 0.0;
    for (fb, fv) in &f {
        let mut covered = 0.0;
        for (j, (gb, gv)) in g.iter().enumerate() {
            let o = fb.overlap(gb);
            if o > 0.0 {
                total += o * (fv - gv).abs();
                covered += o;
                g_covered[j] += o;
            }
        }
        total += (fb.volume() - covered).max(0.0) * fv.abs();
    }
    for ((gb, gv), cov) in g.iter().zip(g_covered) {
        total += (gb.volume() - cov).max(0.0) * gv.abs();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{make_box_mixture, make_checkerboard};
    use rand::Rng;

    fn unit_cells(vals: &[f64]) -> PiecewiseConstantDensity {
        let grid = GridPartition::at_origin(1, 1.0).unwrap();
        let values = vals
            .iter()
            .enumerate()
            .map(|(i, v)| (GridCell(vec![i as i64]), *v))
            .collect();
        PiecewiseConstantDensity::new(grid, values).unwrap()
    }

    #[test]
    fn normalize_example() {
        let f = normalize_density(&unit_cells(&[2.0, -1.0, 1.0])).unwrap();
        assert!((f.value_at(&[0.5]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.value_at(&[1.5]), 0.0);
        assert!((f.value_at(&[2.5]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_identity_on_densities() {
        let f = unit_cells(&[0.25, 0.75]);
        assert_eq!(normalize_density(&f).unwrap(), f);
    }

    #[test]
    fn degenerate_falls_back() {
        let raw = unit_cells(&[-1.0]);
        assert!(matches!(normalize_density(&raw), Err(Error::Degenerate(_))));
        let u = normalize_or_uniform(&raw);
        assert!(u.is_fallback());
        assert_eq!(u.mass(), 1.0);
        assert_eq!(u.value_at(&[0.3]), 1.0);
    }

    #[test]
    fn l1_examples() {
        let f = unit_cells(&[1.0]);
        assert_eq!(l1_distance(&f, &f), 0.0);
        let g = make_box_mixture(vec![(AaBox::new(vec![0.5], vec![1.5]).unwrap(), 1.0)]).unwrap();
        assert!((l1_distance(&f, &g) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn l1_within_region() {
        let f = unit_cells(&[1.0, 1.0]);
        let g = unit_cells(&[1.0]);
        assert!((l1_distance(&f, &g) - 1.0).abs() < 1e-15);
        let r = AaBox::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(l1_distance_within(&f, &g, &r), 0.0);
    }

    fn random_density(rng: &mut SeededRng, side: f64, cells: usize) -> PiecewiseConstantDensity {
        let grid = GridPartition::new(side, vec![rng.gen_range(-0.1..0.1)]).unwrap();
        let mut values = BTreeMap::new();
        for _ in 0..cells {
            values.insert(GridCell(vec![rng.gen_range(-5..15)]), rng.gen_range(0.0..3.0));
        }
        normalize_density(&PiecewiseConstantDensity::new(grid, values).unwrap()).unwrap()
    }

    #[test]
    fn l1_matches_monte_carlo() {
        let mut rng = SeededRng::new(12, 0);
        let g = make_box_mixture(vec![
            (AaBox::new(vec![-0.3], vec![0.4]).unwrap(), 0.6),
            (AaBox::new(vec![0.9], vec![1.7]).unwrap(), 0.4),
        ])
        .unwrap();
        for _ in 0..5 {
            let f = random_density(&mut rng, 0.13, 8);
            let exact = l1_distance(&f, &g);
            // uniform proposal on a box containing both supports
            let (lo, hi) = (-1.5, 2.5);
            let m = 200_000;
            let samples: Vec<f64> = (0..m)
                .map(|_| {
                    let x = [lo + (hi - lo) * rng.open_unit()];
                    (hi - lo) * (f.value_at(&x) - g.density_at(&x)).abs()
                })
                .collect();
            let (mean, se) = crate::classify::mean_and_se(&samples);
            assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
        }
    }

    #[test]
    fn l1_metric_axioms() {
        let mut rng = SeededRng::new(13, 0);
        for _ in 0..50 {
            let a = random_density(&mut rng, 0.2, 6);
            let b = random_density(&mut rng, 0.15, 6);
            let c = random_density(&mut rng, 0.31, 6);
            let ab = l1_distance(&a, &b);
            assert!((ab - l1_distance(&b, &a)).abs() < 1e-12);
            assert!(l1_distance(&a, &a).abs() < 1e-12);
            assert!(ab <= l1_distance(&a, &c) + l1_distance(&c, &b) + 1e-12);
            assert!((0.0..=2.0 + 1e-12).contains(&ab));
        }
    }

    #[test]
    fn normalization_error_is_controlled() {
        let mut rng = SeededRng::new(14, 0);
        let mut checked = 0;
        for _ in 0..500 {
            let truth = random_density(&mut rng, 0.25, 5);
            let mut noisy = truth.values().clone();
            for v in noisy.values_mut() {
                *v += rng.gen_range(-0.4..0.4);
            }
            noisy.insert(GridCell(vec![rng.gen_range(20..30)]), rng.gen_range(-0.3..0.3));
            let raw = PiecewiseConstantDensity::new(truth.grid().clone(), noisy).unwrap();
            let w = l1_distance(&raw, &truth);
            if w >= 1.0 {
                continue;
            }
            let g = normalize_density(&raw).unwrap();
            let bound = 2.0 * w / (1.0 - w);
            assert!(l1_distance(&raw, &g) <= bound + 1e-12);
            assert!(l1_distance(&g, &truth) <= bound + 1e-12);
            checked += 1;
        }
        assert!(checked > 100);
    }

    #[test]
    fn pcde_single_cell() {
        let pts = vec![vec![0.01]; 400];
        let b = PrivacyBudget::new(1.0, 1e-3).unwrap();
        let f = pcde_fit(&pts, &b, &mut SeededRng::new(1, 0)).unwrap();
        assert_eq!(f.values().len(), 1);
        let r = f.grid().side();
        let c_hat = f.values()[&GridCell(vec![0])] * 400.0 * r;
        assert!((f.mass() - c_hat / 400.0).abs() < 1e-12);
        assert_eq!(f.value_at(&[0.5]), 0.0);
    }

    #[test]
    fn pcde_sparsity() {
        let dist = make_checkerboard(1, 1, 0.0).unwrap();
        let pts = dist.sample_points(10_000, &mut SeededRng::new(2, 0));
        let b = PrivacyBudget::new(1.0, 1e-4).unwrap();
        let f = pcde_fit(&pts, &b, &mut SeededRng::new(2, 1)).unwrap();
        assert!(f.values().len() <= 100);
        assert!(f.values().keys().all(|c| (0..100).contains(&c.0[0])));
    }

    #[test]
    fn pcde_needs_delta_and_points() {
        let mut rng = SeededRng::new(0, 0);
        let pure = PrivacyBudget::pure(1.0).unwrap();
        assert!(pcde_fit(&[vec![0.5]], &pure, &mut rng).is_err());
        let b = PrivacyBudget::new(1.0, 0.1).unwrap();
        assert!(pcde_fit(&[], &b, &mut rng).is_err());
    }

    #[test]
    fn histogram_density_integrates_to_one() {
        let dist = make_checkerboard(2, 1, 0.0).unwrap();
        let pts = dist.sample_points(500, &mut SeededRng::new(3, 0));
        let f = histogram_density(&pts).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-12);
        assert!(f.support_hint().is_some());
    }
}
