//! Private partition classifiers.
//!
//! All three learners share one shape: a data-independent partition, a
//! per-cell statistic computed from the sample, noise, and a frozen
//! decision per cell.
//!
//! * [`pcl_fit`]: cube grid over `[0,1]^d`, one Laplace draw per cell on the
//!   vote margin `Σ (yᵢ − ½)`. The margin vector has L1 sensitivity 1 under
//!   replace-one neighbours, so the whole release is ε-DP.
//! * [`pcl2_fit`]: the same vote over Voronoi cells of a maximal packing.
//! * [`pcl2b_fit`]: two stability-based histograms (all points, positive
//!   points) over Voronoi cells; `(2ε, 2δ)`-DP by composition.

use std::collections::BTreeMap;

use crate::dp::{laplace_mechanism, stable_histogram, NoisyHistogram, PrivacyBudget};
use crate::error::{Error, Result};
use crate::partition::{
    build_maximal_packing, grid_side_length, packing_side_length, CellPartition, GridCell,
    MetricPartition, SpaceDescriptor, UnitCubeGrid,
};
use crate::rng::SeededRng;
use crate::synthetic::SyntheticDistribution;

/// Points in ℝᵈ with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    points: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl LabeledSample {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::input(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(d) = points.first().map(Vec::len) {
            if d == 0 || points.iter().any(|p| p.len() != d) {
                return Err(Error::input("points must share a positive dimension"));
            }
        }
        Ok(LabeledSample { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], bool)> {
        self.points.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }

    /// Copy with record `i` replaced (a replace-one neighbour).
    pub fn with_replaced(&self, i: usize, point: Vec<f64>, label: bool) -> Result<Self> {
        if i >= self.len() {
            return Err(Error::input(format!("index {i} out of range")));
        }
        let mut out = self.clone();
        out.points[i] = point;
        out.labels[i] = label;
        Self::new(out.points, out.labels)
    }

    /// Number of records in which the two samples differ, or `None` if they
    /// have different sizes.
    pub fn hamming_distance(&self, other: &LabeledSample) -> Option<usize> {
        if self.len() != other.len() {
            return None;
        }
        Some(
            self.iter()
                .zip(other.iter())
                .filter(|(a, b)| a != b)
                .count(),
        )
    }
}

pub trait Classifier {
    fn predict(&self, x: &[f64]) -> bool;
}

/// Noisy majority vote: 1 iff `signed_sum + noise > 0`.
pub fn decide_cell(signed_sum: f64, noise: f64) -> bool {
    signed_sum + noise > 0.0
}

/// Plug-in rule: 1 iff `eta_hat(x) > 1/2`.
pub fn plugin_classify(eta_hat: impl Fn(&[f64]) -> f64, x: &[f64]) -> bool {
    eta_hat(x) > 0.5
}

/// Classifier wrapper around an arbitrary regression estimate.
pub struct PluginClassifier<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Classifier for PluginClassifier<F> {
    fn predict(&self, x: &[f64]) -> bool {
        plugin_classify(&self.0, x)
    }
}

/// Per-cell vote state. `signed_sum = Σ (yᵢ − ½)` over the cell's points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellVote {
    pub signed_sum: f64,
    pub count: usize,
    pub noise: f64,
}

impl CellVote {
    /// Non-private label frequency in the cell.
    pub fn eta_hat(&self) -> Option<f64> {
        (self.count > 0).then(|| self.signed_sum / self.count as f64 + 0.5)
    }

    /// Regression estimate whose plug-in rule reproduces the noisy vote,
    /// clipped to `[0, 1]`. Empty cells use `½ + noise`.
    pub fn eta_hat_private(&self) -> f64 {
        let n = self.count.max(1) as f64;
        ((self.signed_sum + self.noise) / n + 0.5).clamp(0.0, 1.0)
    }

    pub fn decision(&self) -> bool {
        decide_cell(self.signed_sum, self.noise)
    }
}

/// Exact vote statistics of a fit. Holds raw counts: diagnostics only, never
/// part of a release.
#[derive(Clone, Debug, PartialEq)]
pub struct CellVoteTable<K: Ord> {
    votes: BTreeMap<K, CellVote>,
}

impl<K: Ord> CellVoteTable<K> {
    pub fn get(&self, cell: &K) -> Option<&CellVote> {
        self.votes.get(cell)
    }

    pub fn count(&self, cell: &K) -> usize {
        self.votes.get(cell).map_or(0, |v| v.count)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &CellVote)> {
        self.votes.iter()
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }
}

/// Frozen per-cell decisions over a partition.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionClassifier<P: CellPartition> {
    partition: P,
    decisions: BTreeMap<P::Cell, bool>,
    default_label: bool,
}

impl<P: CellPartition> PartitionClassifier<P> {
    pub fn new(partition: P, decisions: BTreeMap<P::Cell, bool>, default_label: bool) -> Self {
        PartitionClassifier {
            partition,
            decisions,
            default_label,
        }
    }

    pub fn partition(&self) -> &P {
        &self.partition
    }

    pub fn decisions(&self) -> &BTreeMap<P::Cell, bool> {
        &self.decisions
    }

    pub fn default_label(&self) -> bool {
        self.default_label
    }

    pub fn decision_for(&self, cell: &P::Cell) -> bool {
        self.decisions.get(cell).copied().unwrap_or(self.default_label)
    }
}

impl<P: CellPartition> Classifier for PartitionClassifier<P> {
    fn predict(&self, x: &[f64]) -> bool {
        self.decision_for(&self.partition.locate(x))
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn predict(&self, x: &[f64]) -> bool {
        (**self).predict(x)
    }
}

/// Noisy votes over an explicit cell list; one Laplace draw per listed cell,
/// in list order, from a single vector release with sensitivity 1.
fn noisy_vote<P: CellPartition>(
    partition: P,
    cells: Vec<P::Cell>,
    sample: &LabeledSample,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<(PartitionClassifier<P>, CellVoteTable<P::Cell>)> {
    let mut votes: BTreeMap<P::Cell, CellVote> = cells
        .iter()
        .cloned()
        .map(|c| {
            (
                c,
                CellVote {
                    signed_sum: 0.0,
                    count: 0,
                    noise: 0.0,
                },
            )
        })
        .collect();
    for (x, y) in sample.iter() {
        let v = votes
            .get_mut(&partition.locate(x))
            .ok_or_else(|| Error::input("sample point falls outside the materialized cells"))?;
        v.signed_sum += if y { 0.5 } else { -0.5 };
        v.count += 1;
    }
    let margins: Vec<f64> = cells.iter().map(|c| votes[c].signed_sum).collect();
    let noisy = laplace_mechanism(&margins, 1.0, epsilon, rng)?;
    let mut decisions = BTreeMap::new();
    for (c, (noisy_margin, margin)) in cells.iter().zip(noisy.iter().zip(&margins)) {
        let v = votes.get_mut(c).expect("listed cell");
        v.noise = noisy_margin - margin;
        decisions.insert(c.clone(), v.decision());
    }
    Ok((
        PartitionClassifier::new(partition, decisions, false),
        CellVoteTable { votes },
    ))
}

fn require_nonempty(sample: &LabeledSample) -> Result<usize> {
    match sample.dim() {
        Some(d) => Ok(d),
        None => Err(Error::input("cannot fit on an empty sample")),
    }
}

/// Private histogram classifier over `[0,1]^d`; ε-DP.
pub fn pcl_fit(
    sample: &LabeledSample,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<PartitionClassifier<UnitCubeGrid>> {
    pcl_fit_with_votes(sample, epsilon, rng).map(|(c, _)| c)
}

pub fn pcl_fit_with_votes(
    sample: &LabeledSample,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<(PartitionClassifier<UnitCubeGrid>, CellVoteTable<GridCell>)> {
    let d = require_nonempty(sample)?;
    if let Some(p) = sample
        .points()
        .iter()
        .find(|p| p.iter().any(|v| !(0.0..=1.0).contains(v)))
    {
        return Err(Error::input(format!("point {p:?} lies outside [0,1]^{d}")));
    }
    let grid = UnitCubeGrid::new(d, grid_side_length(sample.len(), d))?;
    let cells: Vec<GridCell> = grid.cells().collect();
    noisy_vote(grid, cells, sample, epsilon, rng)
}

fn check_in_space(sample: &LabeledSample, space: &SpaceDescriptor) -> Result<()> {
    match sample.points().iter().find(|p| !space.contains(p)) {
        Some(p) => Err(Error::input(format!("point {p:?} lies outside {}", space.name()))),
        None => Ok(()),
    }
}

/// Packing used by the metric learners for a sample of size `n`.
pub fn metric_partition_for(space: &SpaceDescriptor, n: usize) -> Result<MetricPartition> {
    build_maximal_packing(space, packing_side_length(n.max(1), space.dim()))
}

/// Private Voronoi classifier on a bounded metric space; ε-DP.
pub fn pcl2_fit(
    sample: &LabeledSample,
    space: &SpaceDescriptor,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<PartitionClassifier<MetricPartition>> {
    require_nonempty(sample)?;
    let partition = metric_partition_for(space, sample.len())?;
    pcl2_fit_on(partition, sample, epsilon, rng).map(|(c, _)| c)
}

/// PCL2 on a prebuilt packing (which must come from [`metric_partition_for`]
/// or otherwise be chosen independently of the sample).
pub fn pcl2_fit_on(
    partition: MetricPartition,
    sample: &LabeledSample,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<(PartitionClassifier<MetricPartition>, CellVoteTable<usize>)> {
    require_nonempty(sample)?;
    check_in_space(sample, partition.space())?;
    let cells: Vec<usize> = (0..partition.len()).collect();
    noisy_vote(partition, cells, sample, epsilon, rng)
}

/// The two noisy histograms released by PCL2b.
#[derive(Clone, Debug, PartialEq)]
pub struct Pcl2bRelease {
    pub counts: NoisyHistogram<usize>,
    pub positives: NoisyHistogram<usize>,
}

/// `1[min(ŷ, ĉ) > ĉ/2]`; a cell with `ĉ = 0` predicts 0.
pub fn pcl2b_decide(c_hat: f64, y_hat: f64) -> bool {
    y_hat.min(c_hat) > c_hat / 2.0
}

/// Private Voronoi classifier built from stability-based histograms;
/// `(2ε, 2δ)`-DP overall.
pub fn pcl2b_fit(
    sample: &LabeledSample,
    space: &SpaceDescriptor,
    budget: &PrivacyBudget,
    rng: &mut SeededRng,
) -> Result<PartitionClassifier<MetricPartition>> {
    require_nonempty(sample)?;
    let partition = metric_partition_for(space, sample.len())?;
    pcl2b_fit_on(partition, sample, budget, rng).map(|(c, _)| c)
}

pub fn pcl2b_fit_on(
    partition: MetricPartition,
    sample: &LabeledSample,
    budget: &PrivacyBudget,
    rng: &mut SeededRng,
) -> Result<(PartitionClassifier<MetricPartition>, Pcl2bRelease)> {
    if budget.delta() <= 0.0 {
        return Err(Error::param("PCL2b needs delta > 0"));
    }
    require_nonempty(sample)?;
    check_in_space(sample, partition.space())?;
    let cells: Vec<usize> = sample.points().iter().map(|x| partition.voronoi_cell(x)).collect();
    let counts = stable_histogram(cells.iter().copied(), budget, rng)?;
    let positives = stable_histogram(
        cells
            .iter()
            .zip(sample.labels())
            .filter(|(_, y)| **y)
            .map(|(c, _)| *c),
        budget,
        rng,
    )?;
    let decisions = counts
        .iter()
        .map(|(cell, c_hat)| (*cell, pcl2b_decide(c_hat, positives.get(cell))))
        .collect();
    Ok((
        PartitionClassifier::new(partition, decisions, false),
        Pcl2bRelease { counts, positives },
    ))
}

/// Monte-Carlo estimate of `err_P(h)` from `m_test` fresh draws.
pub fn empirical_error(
    classifier: &impl Classifier,
    dist: &SyntheticDistribution,
    m_test: usize,
    rng: &mut SeededRng,
) -> f64 {
    assert!(m_test >= 1, "m_test must be positive");
    let mut wrong = 0usize;
    for _ in 0..m_test {
        let x = dist.sample_point(rng);
        let y = rng.open_unit() < dist.eta(&x);
        if classifier.predict(&x) != y {
            wrong += 1;
        }
    }
    wrong as f64 / m_test as f64
}

/// Both sides of the plug-in excess-risk inequality, estimated on one set of
/// test draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PluginCheck {
    pub error: f64,
    pub error_se: f64,
    pub mean_abs_gap: f64,
    pub mean_abs_gap_se: f64,
    pub bayes_error: f64,
}

impl PluginCheck {
    /// `err − L* − 2·E|η − η̂|`; the inequality says this is ≤ 0.
    pub fn slack_used(&self) -> f64 {
        self.error - self.bayes_error - 2.0 * self.mean_abs_gap
    }

    /// Combined standard error of [`slack_used`](Self::slack_used).
    pub fn combined_se(&self) -> f64 {
        (self.error_se.powi(2) + 4.0 * self.mean_abs_gap_se.powi(2)).sqrt()
    }

    pub fn holds_within(&self, sigmas: f64) -> bool {
        self.slack_used() <= sigmas * self.combined_se()
    }
}

/// Estimates `err(ĥ)` and `E|η − η̂^ε|` for a vote-based classifier, where
/// `η̂^ε` is rebuilt from the vote table.
pub fn plugin_check<P: CellPartition>(
    classifier: &PartitionClassifier<P>,
    votes: &CellVoteTable<P::Cell>,
    dist: &SyntheticDistribution,
    m_test: usize,
    rng: &mut SeededRng,
) -> PluginCheck {
    assert!(m_test >= 2);
    let mut errs = Vec::with_capacity(m_test);
    let mut gaps = Vec::with_capacity(m_test);
    for _ in 0..m_test {
        let x = dist.sample_point(rng);
        let eta = dist.eta(&x);
        let y = rng.open_unit() < eta;
        let cell = classifier.partition().locate(&x);
        let eta_hat = votes.get(&cell).map_or(0.0, CellVote::eta_hat_private);
        errs.push(f64::from(u8::from(classifier.predict(&x) != y)));
        gaps.push((eta - eta_hat).abs());
    }
    let (error, error_se) = mean_and_se(&errs);
    let (mean_abs_gap, mean_abs_gap_se) = mean_and_se(&gaps);
    PluginCheck {
        error,
        error_se,
        mean_abs_gap,
        mean_abs_gap_se,
        bayes_error: dist.bayes_error(),
    }
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
