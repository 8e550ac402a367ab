//! Private semi-supervised learning of one-dimensional thresholds.
//!
//! The unlabeled sample only ever reaches a private density estimate; a
//! synthetic unlabeled sample drawn from that estimate seeds a finite
//! hypothesis net, and the labeled sample only ever reaches an exponential
//! mechanism over that net. Privacy of the whole pipeline follows from
//! composition and post-processing.

use rand::distributions::{Distribution, WeightedIndex};

use crate::classify::{Classifier, LabeledSample};
use crate::density::{normalize_or_uniform, pcde_fit, PiecewiseConstantDensity};
use crate::dp::PrivacyBudget;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// `h(x) = direction XOR 1[x < cut]`: with `direction = true` the hypothesis
/// predicts 1 on `x ≥ cut`. Infinite cuts give the constant hypotheses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdHypothesis {
    pub cut: f64,
    pub direction: bool,
}

impl ThresholdHypothesis {
    pub fn constant(label: bool) -> Self {
        ThresholdHypothesis {
            cut: f64::NEG_INFINITY,
            direction: label,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.cut.is_infinite()
    }

    /// Exact error under a distribution that is uniform on `[0,1]` with
    /// labels `1[x ≥ target]`, `target ∈ [0,1]`.
    pub fn error_vs_threshold(&self, target: f64) -> f64 {
        let cut = self.cut.clamp(0.0, 1.0);
        let gap = (cut - target).abs();
        if self.direction {
            gap
        } else {
            1.0 - gap
        }
    }
}

impl Classifier for ThresholdHypothesis {
    fn predict(&self, x: &[f64]) -> bool {
        self.direction ^ (x[0] < self.cut)
    }
}

/// Finite net: the two constants, then for every gap between consecutive
/// distinct unlabeled points a midpoint cut in both directions.
pub fn threshold_net(unlabeled: &[Vec<f64>]) -> Vec<ThresholdHypothesis> {
    let mut xs: Vec<f64> = unlabeled.iter().map(|p| p[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut net = vec![
        ThresholdHypothesis::constant(false),
        ThresholdHypothesis::constant(true),
    ];
    for w in xs.windows(2) {
        let cut = 0.5 * (w[0] + w[1]);
        net.push(ThresholdHypothesis {
            cut,
            direction: false,
        });
        net.push(ThresholdHypothesis {
            cut,
            direction: true,
        });
    }
    net
}

/// Labeled error count of every hypothesis in `net`, in O((m + |net|) log m).
pub fn error_counts(net: &[ThresholdHypothesis], labeled: &LabeledSample) -> Vec<u64> {
    let mut pts: Vec<(f64, bool)> = labeled.iter().map(|(x, y)| (x[0], y)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // ones_below[i] = positives among the i smallest points
    let mut ones_below = Vec::with_capacity(pts.len() + 1);
    ones_below.push(0u64);
    for (_, y) in &pts {
        ones_below.push(ones_below.last().unwrap() + u64::from(*y));
    }
    let m = pts.len() as u64;
    let total_ones = *ones_below.last().unwrap();
    net.iter()
        .map(|h| {
            let below = pts.partition_point(|(x, _)| *x < h.cut);
            let ones_lo = ones_below[below];
            let zeros_lo = below as u64 - ones_lo;
            let ones_hi = total_ones - ones_lo;
            let zeros_hi = (m - below as u64) - ones_hi;
            if h.direction {
                // predicts 0 below the cut and 1 above it
                ones_lo + zeros_hi
            } else {
                zeros_lo + ones_hi
            }
        })
        .collect()
}

/// Exponential mechanism with score `−errors`: returns index `i` with
/// probability ∝ `exp(−ε·errors[i] / (2·sensitivity))`.
pub fn exponential_mechanism(
    errors: &[u64],
    epsilon: f64,
    sensitivity: f64,
    rng: &mut SeededRng,
) -> Result<usize> {
    if errors.is_empty() {
        return Err(Error::param("exponential mechanism needs a nonempty candidate set"));
    }
    if !(epsilon > 0.0) || !(sensitivity > 0.0) {
        return Err(Error::param("epsilon and sensitivity must be positive"));
    }
    let best = *errors.iter().min().unwrap();
    let weights: Vec<f64> = errors
        .iter()
        .map(|e| (-epsilon * (e - best) as f64 / (2.0 * sensitivity)).exp())
        .collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::param(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Semi-private learner: ε-DP in the labeled sample for any fixed unlabeled
/// sample.
pub fn semi_private_learn(
    labeled: &LabeledSample,
    unlabeled: &[Vec<f64>],
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<ThresholdHypothesis> {
    if labeled.is_empty() {
        return Err(Error::input("labeled sample is empty"));
    }
    if labeled.dim() != Some(1) || unlabeled.iter().any(|p| p.len() != 1) {
        return Err(Error::input("threshold learning needs one-dimensional points"));
    }
    let net = threshold_net(unlabeled);
    let errors = error_counts(&net, labeled);
    Ok(net[exponential_mechanism(&errors, epsilon, 1.0, rng)?])
}

/// Draws `m` i.i.d. points: a cell with probability `value · r^d`, then a
/// uniform point inside it.
pub fn sample_from_density(
    f: &PiecewiseConstantDensity,
    m: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<f64>>> {
    let cells: Vec<_> = f.values().iter().filter(|(_, v)| **v > 0.0).collect();
    if cells.is_empty() {
        return Err(Error::input("density has no positive cell"));
    }
    let vol = f.grid().cell_volume();
    let pick = WeightedIndex::new(cells.iter().map(|(_, v)| **v * vol))
        .map_err(|e| Error::param(e.to_string()))?;
    Ok((0..m)
        .map(|_| {
            let b = f.grid().cell_box(cells[pick.sample(rng)].0);
            b.lo()
                .iter()
                .zip(b.hi())
                .map(|(lo, hi)| lo + (hi - lo) * rng.open_unit())
                .collect()
        })
        .collect())
}

/// Sample sizes for the private pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SslBudgets {
    pub m_labeled: usize,
    pub n_unlabeled: usize,
    /// Size of the synthetic unlabeled sample drawn from the density estimate.
    pub n_synthetic: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Calibrated constant in [`labeled_sample_size`].
pub const LABELED_CONSTANT: f64 = 1.5;

/// VC dimension of thresholds with both orientations.
pub const THRESHOLD_VC: usize = 2;

/// `⌈(K/(εα)) · VC · ln(1/(αβ))⌉`.
pub fn labeled_sample_size(alpha: f64, beta: f64, epsilon: f64, vc: usize, k: f64) -> usize {
    (k / (epsilon * alpha) * vc as f64 * (1.0 / (alpha * beta)).ln()).ceil() as usize
}

impl SslBudgets {
    /// Labeled size from [`labeled_sample_size`] with the calibrated constant.
    pub fn calibrated(alpha: f64, beta: f64, epsilon: f64, n_unlabeled: usize, n_synthetic: usize) -> Result<Self> {
        let b = SslBudgets {
            m_labeled: labeled_sample_size(alpha, beta, epsilon, THRESHOLD_VC, LABELED_CONSTANT),
            n_unlabeled,
            n_synthetic,
            alpha,
            beta,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_labeled == 0 || self.n_unlabeled == 0 || self.n_synthetic == 0 {
            return Err(Error::param("sample sizes must be positive"));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::param(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Private consistent semi-supervised learner.
///
/// `budget` covers the density stage; the labeled stage spends
/// `budget.epsilon()` on a disjoint part of the input.
pub fn private_cssl(
    labeled: &LabeledSample,
    unlabeled: &[Vec<f64>],
    budget: &PrivacyBudget,
    budgets: &SslBudgets,
    rng: &mut SeededRng,
) -> Result<ThresholdHypothesis> {
    budgets.validate()?;
    let raw = pcde_fit(unlabeled, budget, rng)?;
    let density = normalize_or_uniform(&raw);
    let synthetic = sample_from_density(&density, budgets.n_synthetic, rng)?;
    semi_private_learn(labeled, &synthetic, budget.epsilon(), rng)
}
