//! Ground-truth distributions with closed-form marginal, regression function
//! and Bayes error. Every statistical test in the crate measures against
//! these.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::classify::{Classifier, LabeledSample};
use crate::error::{Error, Result};
use crate::geometry::AaBox;
use crate::rng::SeededRng;

/// The regression function `η(x) = P(y = 1 | x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Regression {
    /// Parity board over `region`: cells whose index sum is even get `1 − p`,
    /// odd cells get `p`. Points outside the region use the nearest cell.
    Checkerboard {
        region: AaBox,
        cells_per_axis: usize,
        p: f64,
    },
    /// `1 − p` on `x₀ ≥ cut`, `p` below it.
    Threshold { cut: f64, p: f64 },
    Constant(f64),
}

impl Regression {
    pub fn eta(&self, x: &[f64]) -> f64 {
        match self {
            Regression::Checkerboard {
                region,
                cells_per_axis,
                p,
            } => {
                let c = *cells_per_axis as i64;
                let parity: i64 = x
                    .iter()
                    .zip(region.lo().iter().zip(region.hi()))
                    .map(|(v, (lo, hi))| {
                        (((v - lo) / (hi - lo) * c as f64).floor() as i64).clamp(0, c - 1)
                    })
                    .sum();
                if parity % 2 == 0 {
                    1.0 - p
                } else {
                    *p
                }
            }
            Regression::Threshold { cut, p } => {
                if x[0] >= *cut {
                    1.0 - p
                } else {
                    *p
                }
            }
            Regression::Constant(v) => *v,
        }
    }

    /// Exact average of `min(η, 1 − η)` over `b`.
    fn mean_pointwise_risk(&self, _b: &AaBox) -> f64 {
        // every bundled board takes only the values p and 1 − p
        match self {
            Regression::Checkerboard { p, .. } | Regression::Threshold { p, .. } => p.min(1.0 - p),
            Regression::Constant(v) => v.min(1.0 - v),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDistribution {
    name: String,
    dim: usize,
    boxes: Vec<AaBox>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    regression: Regression,
    bayes_error: f64,
}

impl SyntheticDistribution {
    fn build(name: String, boxes: Vec<(AaBox, f64)>, regression: Regression) -> Result<Self> {
        let dim = boxes
            .first()
            .map(|(b, _)| b.dim())
            .ok_or_else(|| Error::param("a mixture needs at least one box"))?;
        if boxes.iter().any(|(b, _)| b.dim() != dim) {
            return Err(Error::param("mixture boxes have different dimensions"));
        }
        if boxes.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(Error::param("mixture weights must be positive"));
        }
        let total: f64 = boxes.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("mixture weights sum to {total}, not 1")));
        }
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes[i].0.overlap(&boxes[j].0) > 0.0 {
                    return Err(Error::param(format!("mixture boxes {i} and {j} overlap")));
                }
            }
        }
        let (boxes, weights): (Vec<AaBox>, Vec<f64>) = boxes.into_iter().unzip();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let bayes_error = boxes
            .iter()
            .zip(&weights)
            .map(|(b, w)| w * regression.mean_pointwise_risk(b))
            .sum();
        Ok(SyntheticDistribution {
            name,
            dim,
            boxes,
            weights,
            cumulative,
            regression,
            bayes_error,
        })
    }

    /// Replaces the regression function, keeping the marginal.
    pub fn with_regression(self, regression: Regression) -> Result<Self> {
        let pieces = self.boxes.into_iter().zip(self.weights).collect();
        Self::build(self.name, pieces, regression)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn regression(&self) -> &Regression {
        &self.regression
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        self.regression.eta(x)
    }

    /// Bayes error `L* = E[min(η, 1 − η)]`.
    pub fn bayes_error(&self) -> f64 {
        self.bayes_error
    }

    /// Marginal mixture components as `(box, constant density)` pieces.
    pub fn density_pieces(&self) -> Vec<(AaBox, f64)> {
        self.boxes
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| (b.clone(), w / b.volume()))
            .collect()
    }

    pub fn density_at(&self, x: &[f64]) -> f64 {
        self.boxes
            .iter()
            .zip(&self.weights)
            .find(|(b, _)| b.contains(x))
            .map_or(0.0, |(b, w)| w / b.volume())
    }

    /// Exact marginal probability of `query`.
    pub fn box_mass(&self, query: &AaBox) -> f64 {
        self.boxes
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * b.overlap(query) / b.volume())
            .sum()
    }

    pub fn sample_point(&self, rng: &mut SeededRng) -> Vec<f64> {
        let u = rng.open_unit();
        let k = self
            .cumulative
            .iter()
            .position(|c| u < *c)
            .unwrap_or(self.boxes.len() - 1);
        let b = &self.boxes[k];
        b.lo()
            .iter()
            .zip(b.hi())
            .map(|(lo, hi)| {
                let v = lo + (hi - lo) * rng.open_unit();
                // guard the half-open upper face against round-up
                if v >= *hi {
                    lo.max(hi - (hi - lo) * f64::EPSILON)
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn sample_points(&self, n: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_point(rng)).collect()
    }

    pub fn sample_labeled(&self, n: usize, rng: &mut SeededRng) -> LabeledSample {
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.sample_point(rng);
            labels.push(rng.open_unit() < self.eta(&x));
            points.push(x);
        }
        LabeledSample::new(points, labels).expect("consistent by construction")
    }
}

/// Uniform on `[0,1]^d` with a parity checkerboard regression; `L* = p`.
pub fn make_checkerboard(d: usize, cells_per_axis: usize, p: f64) -> Result<SyntheticDistribution> {
    if d == 0 || cells_per_axis == 0 {
        return Err(Error::param("dimension and cells per axis must be positive"));
    }
    if !(0.0..0.5).contains(&p) {
        return Err(Error::param(format!("checkerboard noise p must lie in [0, 1/2), got {p}")));
    }
    SyntheticDistribution::build(
        format!("checkerboard-d{d}-c{cells_per_axis}-p{p}"),
        vec![(AaBox::unit(d), 1.0)],
        Regression::Checkerboard {
            region: AaBox::unit(d),
            cells_per_axis,
            p,
        },
    )
}

/// Piecewise-uniform marginal on disjoint boxes; labels are all 0 until a
/// regression is attached with [`SyntheticDistribution::with_regression`].
pub fn make_box_mixture(boxes: Vec<(AaBox, f64)>) -> Result<SyntheticDistribution> {
    let name = format!("box-mixture-{}", boxes.len());
    SyntheticDistribution::build(name, boxes, Regression::Constant(0.0))
}

/// Uniform on `[0,1]` with labels `1[x ≥ cut]` flipped with probability `p`.
pub fn make_threshold(cut: f64, p: f64) -> Result<SyntheticDistribution> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::param(format!("label noise p must lie in [0, 1/2), got {p}")));
    }
    SyntheticDistribution::build(
        format!("threshold-{cut}-p{p}"),
        vec![(AaBox::unit(1), 1.0)],
        Regression::Threshold { cut, p },
    )
}

/// Uniform on the circle (angles in `[0, 2π)`), checkerboard over `arcs`
/// equal arcs.
pub fn make_circle_checkerboard(arcs: usize, p: f64) -> Result<SyntheticDistribution> {
    if arcs == 0 || !(0.0..0.5).contains(&p) {
        return Err(Error::param("need at least one arc and p in [0, 1/2)"));
    }
    let region = AaBox::new(vec![0.0], vec![2.0 * PI])?;
    SyntheticDistribution::build(
        format!("circle-checkerboard-{arcs}-p{p}"),
        vec![(region.clone(), 1.0)],
        Regression::Checkerboard {
            region,
            cells_per_axis: arcs,
            p,
        },
    )
}

/// The Bayes-optimal rule `1[η(x) > 1/2]`.
pub struct BayesClassifier<'a> {
    dist: &'a SyntheticDistribution,
}

pub fn bayes_classifier(dist: &SyntheticDistribution) -> BayesClassifier<'_> {
    BayesClassifier { dist }
}

impl Classifier for BayesClassifier<'_> {
    fn predict(&self, x: &[f64]) -> bool {
        self.dist.eta(x) > 0.5
    }
}

/// Serializable description of a bundled distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Checkerboard {
        dim: usize,
        cells_per_axis: usize,
        p: f64,
    },
    Threshold {
        cut: f64,
        #[serde(default)]
        p: f64,
    },
    BoxMixture {
        boxes: Vec<BoxSpec>,
    },
    CircleCheckerboard {
        arcs: usize,
        p: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub weight: f64,
}

impl DistributionSpec {
    pub fn build(&self) -> Result<SyntheticDistribution> {
        match self {
            DistributionSpec::Checkerboard {
                dim,
                cells_per_axis,
                p,
            } => make_checkerboard(*dim, *cells_per_axis, *p),
            DistributionSpec::Threshold { cut, p } => make_threshold(*cut, *p),
            DistributionSpec::BoxMixture { boxes } => make_box_mixture(
                boxes
                    .iter()
                    .map(|b| Ok((AaBox::new(b.lo.clone(), b.hi.clone())?, b.weight)))
                    .collect::<Result<_>>()?,
            ),
            DistributionSpec::CircleCheckerboard { arcs, p } => make_circle_checkerboard(*arcs, *p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::empirical_error;

    #[test]
    fn checkerboard_bayes_error() {
        assert_eq!(make_checkerboard(2, 4, 0.0).unwrap().bayes_error(), 0.0);
        assert_eq!(make_checkerboard(1, 3, 0.1).unwrap().bayes_error(), 0.1);
        assert!(make_checkerboard(1, 2, 0.5).is_err());
        assert!(make_checkerboard(1, 0, 0.1).is_err());
    }

    #[test]
    fn checkerboard_parity() {
        let d = make_checkerboard(1, 2, 0.1).unwrap();
        assert_eq!(d.eta(&[0.25]), 0.9);
        assert_eq!(d.eta(&[0.75]), 0.1);
        assert_eq!(d.eta(&[1.0]), 0.1);
        let b = bayes_classifier(&d);
        assert!(b.predict(&[0.1]));
        assert!(!b.predict(&[0.6]));
    }

    #[test]
    fn tie_predicts_zero() {
        let d = make_checkerboard(1, 1, 0.0)
            .unwrap()
            .with_regression(Regression::Constant(0.5))
            .unwrap();
        let b = bayes_classifier(&d);
        assert!(!b.predict(&[0.3]));
        assert_eq!(d.bayes_error(), 0.5);
    }

    #[test]
    fn bayes_classifier_matches_stored_error() {
        let mut rng = SeededRng::new(21, 0);
        for dist in [
            make_checkerboard(1, 2, 0.1).unwrap(),
            make_checkerboard(2, 8, 0.3).unwrap(),
            make_threshold(0.5, 0.0).unwrap(),
            make_circle_checkerboard(6, 0.1).unwrap(),
        ] {
            let m = 100_000;
            let e = empirical_error(&bayes_classifier(&dist), &dist, m, &mut rng);
            let l = dist.bayes_error();
            let sigma = (l * (1.0 - l) / m as f64).sqrt();
            assert!((e - l).abs() <= (3.0 * sigma).max(0.005), "{}: {e} vs {l}", dist.name());
        }
    }

    #[test]
    fn mixture_validation() {
        let a = AaBox::new(vec![0.0], vec![0.6]).unwrap();
        let b = AaBox::new(vec![0.5], vec![1.0]).unwrap();
        assert!(make_box_mixture(vec![(a.clone(), 0.5), (b, 0.5)]).is_err());
        let c = AaBox::new(vec![0.6], vec![1.0]).unwrap();
        assert!(make_box_mixture(vec![(a.clone(), 0.5), (c.clone(), 0.4)]).is_err());
        assert!(make_box_mixture(vec![(a, 0.5), (c, 0.5)]).is_ok());
    }

    #[test]
    fn mixture_split_and_box_mass() {
        let a = AaBox::new(vec![0.0, 0.0], vec![0.5, 1.0]).unwrap();
        let b = AaBox::new(vec![0.5, 0.0], vec![1.0, 0.5]).unwrap();
        let d = make_box_mixture(vec![(a.clone(), 0.75), (b, 0.25)]).unwrap();
        let mut rng = SeededRng::new(4, 4);
        let m = 100_000;
        let pts = d.sample_points(m, &mut rng);
        let in_a = pts.iter().filter(|p| a.contains(p)).count() as f64 / m as f64;
        assert!((in_a - 0.75).abs() < 0.01);

        let q = AaBox::new(vec![0.25, 0.25], vec![0.75, 0.75]).unwrap();
        // analytic: 0.75 * (0.25*0.5)/0.5 + 0.25 * (0.25*0.25)/0.25
        let exact = 0.75 * 0.25 + 0.25 * 0.25;
        assert!((d.box_mass(&q) - exact).abs() < 1e-15);
        let mc = pts.iter().filter(|p| q.contains(p)).count() as f64 / m as f64;
        let sigma = (exact * (1.0 - exact) / m as f64).sqrt();
        assert!((mc - exact).abs() <= 3.0 * sigma);
    }

    #[test]
    fn box_masses_of_a_partition_sum_to_one() {
        let d = make_box_mixture(vec![
            (AaBox::new(vec![0.0], vec![0.3]).unwrap(), 0.2),
            (AaBox::new(vec![0.5], vec![2.0]).unwrap(), 0.8),
        ])
        .unwrap();
        let cuts = [-1.0, 0.1, 0.3, 0.7, 1.9, 3.0];
        let total: f64 = cuts
            .windows(2)
            .map(|w| d.box_mass(&AaBox::new(vec![w[0]], vec![w[1]]).unwrap()))
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip() {
        let s: DistributionSpec = toml::from_str("kind = \"checkerboard\"\ndim = 1\ncells_per_axis = 2\np = 0.1\n").unwrap();
        assert_eq!(s.build().unwrap().bayes_error(), 0.1);
    }
}
