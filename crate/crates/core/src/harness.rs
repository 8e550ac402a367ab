//! Experiment driver: convergence sweeps, density sweeps, SSL benchmarks and
//! empirical privacy audits. Configs are TOML, results are CSV.
//!
//! Every trial draws from its own stream `derive(seed, [n, trial, stage])`,
//! so results do not depend on the thread count or on scheduling order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    empirical_error, pcl2_fit_on, pcl2b_fit_on, pcl_fit, pcl_fit_with_votes, plugin_check,
    metric_partition_for, Classifier, LabeledSample, PluginCheck,
};
use crate::density::{l1_distance, l1_distance_within, pcde_fit};
use crate::dp::{stable_histogram, PrivacyBudget};
use crate::error::{Error, Result};
use crate::geometry::AaBox;
use crate::partition::{CellPartition, GridPartition, MetricPartition, SpaceDescriptor};
use crate::rng::SeededRng;
use crate::ssl::{private_cssl, SslBudgets};
use crate::synthetic::{DistributionSpec, SyntheticDistribution};

const DATA: u64 = 0;
const FIT: u64 = 1;
const EVAL: u64 = 2;
const OCCUPANCY: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pcl,
    Pcl2,
    Pcl2b,
    Pcde,
    Cssl,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pcl => "pcl",
            Algorithm::Pcl2 => "pcl2",
            Algorithm::Pcl2b => "pcl2b",
            Algorithm::Pcde => "pcde",
            Algorithm::Cssl => "cssl",
        }
    }

    fn uses_delta(self) -> bool {
        matches!(self, Algorithm::Pcl2b | Algorithm::Pcde | Algorithm::Cssl)
    }
}

/// `δ` as a function of the sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSchedule {
    Fixed { value: f64 },
    /// `n^(−power)`
    InversePower { power: f64 },
    /// `2^(−c·√n)`
    ExpSqrt { c: f64 },
    /// `2^(−rate·n)`
    Exponential { rate: f64 },
}

impl Default for DeltaSchedule {
    fn default() -> Self {
        DeltaSchedule::InversePower { power: 2.0 }
    }
}

impl DeltaSchedule {
    pub fn at(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            DeltaSchedule::Fixed { value } => value,
            DeltaSchedule::InversePower { power } => n.powf(-power),
            DeltaSchedule::ExpSqrt { c } => (-c * n.sqrt()).exp2(),
            DeltaSchedule::Exponential { rate } => (-rate * n).exp2(),
        }
    }

    /// Whether the schedule decays strictly slower than `2^(−√n)`.
    pub fn dominates_exp_sqrt(&self) -> bool {
        match *self {
            DeltaSchedule::Fixed { value } => value > 0.0,
            DeltaSchedule::InversePower { power } => power.is_finite(),
            DeltaSchedule::ExpSqrt { c } => c < 1.0,
            DeltaSchedule::Exponential { .. } => false,
        }
    }
}

/// Settings for the `ssl` benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SslSettings {
    pub alpha: f64,
    pub beta: f64,
    pub n_unlabeled: usize,
    /// Synthetic unlabeled points drawn from the density estimate; defaults
    /// to `n_unlabeled`.
    #[serde(default)]
    pub n_synthetic: Option<usize>,
    /// Labeled sample sizes to sweep; defaults to the calibrated size.
    #[serde(default)]
    pub m_grid: Option<Vec<usize>>,
}

fn default_m_test() -> usize {
    10_000
}

fn default_occupancy_k() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub distribution: DistributionSpec,
    /// Metric space for `pcl2`/`pcl2b`; inferred from the distribution when
    /// omitted.
    #[serde(default)]
    pub space: Option<SpaceDescriptor>,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub delta: DeltaSchedule,
    #[serde(default = "default_m_test")]
    pub m_test: usize,
    /// The last CSV column reports `P(N(x) ≤ occupancy_k)`.
    #[serde(default = "default_occupancy_k")]
    pub occupancy_k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub ssl: Option<SslSettings>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_err("trials must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(config_err(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.m_test < 2 {
            return Err(config_err("m_test must be at least 2"));
        }
        let dist = self
            .distribution
            .build()
            .map_err(|e| config_err(format!("distribution: {e}")))?;
        let ns = self.sample_sizes();
        if ns.is_empty() {
            return Err(config_err("the sample-size grid is empty"));
        }
        if ns.contains(&0) {
            return Err(config_err("sample sizes must be positive"));
        }
        if self.algorithm != Algorithm::Cssl && ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("n_grid must be strictly increasing"));
        }
        if self.algorithm.uses_delta() {
            if !self.delta.dominates_exp_sqrt() {
                return Err(config_err(format!(
                    "delta schedule {:?} decays as fast as 2^(-sqrt n) or faster",
                    self.delta
                )));
            }
            for &n in &ns {
                let d = self.delta.at(n);
                if !(d > 0.0 && d < 1.0) {
                    return Err(config_err(format!("delta({n}) = {d} is outside (0, 1)")));
                }
            }
        }
        match self.algorithm {
            Algorithm::Pcl => {
                if !matches!(self.distribution, DistributionSpec::Checkerboard { .. } | DistributionSpec::Threshold { .. })
                {
                    return Err(config_err("pcl needs a distribution supported in [0,1]^d"));
                }
            }
            Algorithm::Pcl2 | Algorithm::Pcl2b => {
                let space = self.resolved_space();
                if space.dim() != dist.dim() {
                    return Err(config_err("space and distribution dimensions differ"));
                }
            }
            Algorithm::Pcde => {}
            Algorithm::Cssl => {
                let Some(s) = &self.ssl else {
                    return Err(config_err("cssl needs an [ssl] table"));
                };
                if !matches!(self.distribution, DistributionSpec::Threshold { p, .. } if p == 0.0) {
                    return Err(config_err("cssl needs a realizable threshold distribution (p = 0)"));
                }
                self.ssl_budgets(s, 1)
                    .map_err(|e| config_err(e.to_string()))?;
                if s.m_grid.as_ref().is_some_and(|g| g.is_empty() || g.contains(&0)) {
                    return Err(config_err("m_grid entries must be positive"));
                }
            }
        }
        Ok(())
    }

    /// The swept sample sizes: `n_grid`, or the labeled sizes for `cssl`.
    pub fn sample_sizes(&self) -> Vec<usize> {
        match (&self.algorithm, &self.ssl) {
            (Algorithm::Cssl, Some(s)) => match &s.m_grid {
                Some(g) => g.clone(),
                None => vec![SslBudgets::calibrated(s.alpha, s.beta, self.epsilon, 1, 1)
                    .map(|b| b.m_labeled)
                    .unwrap_or(0)],
            },
            _ => self.n_grid.clone(),
        }
    }

    pub fn resolved_space(&self) -> SpaceDescriptor {
        self.space.clone().unwrap_or(match &self.distribution {
            DistributionSpec::CircleCheckerboard { .. } => SpaceDescriptor::Circle,
            DistributionSpec::Checkerboard { dim, .. } => SpaceDescriptor::UnitCube { dim: *dim },
            DistributionSpec::BoxMixture { boxes } => SpaceDescriptor::UnitCube {
                dim: boxes.first().map_or(1, |b| b.lo.len()),
            },
            DistributionSpec::Threshold { .. } => SpaceDescriptor::UnitCube { dim: 1 },
        })
    }

    fn ssl_budgets(&self, s: &SslSettings, m: usize) -> Result<SslBudgets> {
        let b = SslBudgets {
            m_labeled: m,
            n_unlabeled: s.n_unlabeled,
            n_synthetic: s.n_synthetic.unwrap_or(s.n_unlabeled),
            alpha: s.alpha,
            beta: s.beta,
        };
        b.validate()?;
        Ok(b)
    }
}

/// One fit-and-evaluate cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    /// Excess error for classifiers, L1 distance for densities.
    pub value: f64,
    /// Fraction of test points whose cell holds at most `occupancy_k`
    /// training points.
    pub occupancy: f64,
    /// Plug-in inequality estimate, for vote-based classifiers.
    pub plugin: Option<PluginCheck>,
    /// L1 distance restricted to the unit cube, for densities.
    pub l1_inside: Option<f64>,
}

/// One CSV row of a convergence or density sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub trials: usize,
    pub metric: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub occupancy_le_k: f64,
}

pub const CONVERGENCE_HEADER: [&str; 6] = ["n", "trials", "metric", "mean", "stderr", "occupancy_le_k"];

impl ConvergenceRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.trials.to_string(),
            self.metric.to_string(),
            self.mean.to_string(),
            self.stderr.to_string(),
            self.occupancy_le_k.to_string(),
        ]
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param(e.to_string()))
}

fn stage_rng(seed: u64, n: usize, trial: usize, stage: u64) -> SeededRng {
    SeededRng::derive(seed, &[n as u64, trial as u64, stage])
}

fn occupancy<P: CellPartition>(
    partition: &P,
    train: &[Vec<f64>],
    test: &[Vec<f64>],
    k: usize,
) -> f64 {
    let mut counts: BTreeMap<P::Cell, usize> = BTreeMap::new();
    for x in train {
        *counts.entry(partition.locate(x)).or_insert(0) += 1;
    }
    let low = test
        .iter()
        .filter(|x| counts.get(&partition.locate(x)).copied().unwrap_or(0) <= k)
        .count();
    low as f64 / test.len() as f64
}

/// Runs every trial of a `pcl`, `pcl2`, `pcl2b` or `pcde` sweep. Records are
/// ordered by `(n, trial)`.
pub fn convergence_trials(config: &ExperimentConfig, threads: usize) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    if config.algorithm == Algorithm::Cssl {
        return Err(config_err("use run_ssl_benchmark for cssl"));
    }
    let dist = config.distribution.build()?;
    let pool = thread_pool(threads)?;
    let mut out = Vec::new();
    for &n in &config.n_grid {
        let partition = match config.algorithm {
            Algorithm::Pcl2 | Algorithm::Pcl2b => {
                Some(metric_partition_for(&config.resolved_space(), n)?)
            }
            _ => None,
        };
        let records: Vec<Result<TrialRecord>> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| run_trial(config, &dist, partition.as_ref(), n, t))
                .collect()
        });
        for r in records {
            out.push(r?);
        }
    }
    Ok(out)
}

fn run_trial(
    config: &ExperimentConfig,
    dist: &SyntheticDistribution,
    partition: Option<&MetricPartition>,
    n: usize,
    trial: usize,
) -> Result<TrialRecord> {
    let seed = config.seed;
    let sample = dist.sample_labeled(n, &mut stage_rng(seed, n, trial, DATA));
    let mut fit_rng = stage_rng(seed, n, trial, FIT);
    let mut eval_rng = stage_rng(seed, n, trial, EVAL);
    let test = dist.sample_points(config.m_test, &mut stage_rng(seed, n, trial, OCCUPANCY));
    let k = config.occupancy_k;
    let bayes = dist.bayes_error();
    let rec = |value, occupancy, plugin, l1_inside| TrialRecord {
        n,
        trial,
        value,
        occupancy,
        plugin,
        l1_inside,
    };
    Ok(match config.algorithm {
        Algorithm::Pcl => {
            let (clf, votes) = pcl_fit_with_votes(&sample, config.epsilon, &mut fit_rng)?;
            let check = plugin_check(&clf, &votes, dist, config.m_test, &mut eval_rng);
            let occ = occupancy(clf.partition(), sample.points(), &test, k);
            rec(check.error - bayes, occ, Some(check), None)
        }
        Algorithm::Pcl2 => {
            let partition = partition.expect("packing is built per n").clone();
            let (clf, votes) = pcl2_fit_on(partition, &sample, config.epsilon, &mut fit_rng)?;
            let check = plugin_check(&clf, &votes, dist, config.m_test, &mut eval_rng);
            let occ = occupancy(clf.partition(), sample.points(), &test, k);
            rec(check.error - bayes, occ, Some(check), None)
        }
        Algorithm::Pcl2b => {
            let partition = partition.expect("packing is built per n").clone();
            let budget = PrivacyBudget::new(config.epsilon, config.delta.at(n))?;
            let (clf, _) = pcl2b_fit_on(partition, &sample, &budget, &mut fit_rng)?;
            let err = empirical_error(&clf, dist, config.m_test, &mut eval_rng);
            let occ = occupancy(clf.partition(), sample.points(), &test, k);
            rec(err - bayes, occ, None, None)
        }
        Algorithm::Pcde => {
            let budget = PrivacyBudget::new(config.epsilon, config.delta.at(n))?;
            let f = pcde_fit(sample.points(), &budget, &mut fit_rng)?;
            let l1 = l1_distance(&f, dist);
            let inside = l1_distance_within(&f, dist, &AaBox::unit(dist.dim()));
            let occ = occupancy(f.grid(), sample.points(), &test, k);
            rec(l1, occ, None, Some(inside))
        }
        Algorithm::Cssl => unreachable!("rejected above"),
    })
}

/// Averages trial records into one row per `n`, in grid order.
pub fn summarize(config: &ExperimentConfig, records: &[TrialRecord]) -> Vec<ConvergenceRow> {
    let metric = match config.algorithm {
        Algorithm::Pcde => "l1",
        _ => "excess_error",
    };
    config
        .n_grid
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.value).collect();
            let occ: Vec<f64> = records.iter().filter(|r| r.n == n).map(|r| r.occupancy).collect();
            let (mean, stderr) = mean_and_stderr(&vals);
            ConvergenceRow {
                n,
                trials: vals.len(),
                metric,
                mean,
                stderr,
                occupancy_le_k: mean_and_stderr(&occ).0,
            }
        })
        .collect()
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    crate::classify::mean_and_se(xs)
}

/// Convergence (or density) sweep: one row per grid entry.
pub fn run_convergence(config: &ExperimentConfig, threads: usize) -> Result<Vec<ConvergenceRow>> {
    let records = convergence_trials(config, threads)?;
    Ok(summarize(config, &records))
}

/// Density sweep; same as [`run_convergence`] but insists on `pcde`.
pub fn run_density(config: &ExperimentConfig, threads: usize) -> Result<Vec<ConvergenceRow>> {
    if config.algorithm != Algorithm::Pcde {
        return Err(config_err("the density sweep needs algorithm = \"pcde\""));
    }
    run_convergence(config, threads)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SslRow {
    pub m_labeled: usize,
    pub n_unlabeled: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub stderr: f64,
}

pub const SSL_HEADER: [&str; 5] = ["m_labeled", "n_unlabeled", "trials", "success_rate", "stderr"];

impl SslRow {
    pub fn record(&self) -> Vec<String> {
        vec![
            self.m_labeled.to_string(),
            self.n_unlabeled.to_string(),
            self.trials.to_string(),
            self.success_rate.to_string(),
            self.stderr.to_string(),
        ]
    }
}

/// Private CSSL success rate at level `α` for each labeled sample size.
pub fn run_ssl_benchmark(config: &ExperimentConfig, threads: usize) -> Result<Vec<SslRow>> {
    config.validate()?;
    let (Algorithm::Cssl, Some(settings), DistributionSpec::Threshold { cut, .. }) =
        (config.algorithm, &config.ssl, &config.distribution)
    else {
        return Err(config_err("the ssl benchmark needs algorithm = \"cssl\""));
    };
    let dist = config.distribution.build()?;
    let budget = PrivacyBudget::new(config.epsilon, config.delta.at(settings.n_unlabeled))?;
    let pool = thread_pool(threads)?;
    let mut rows = Vec::new();
    for m in config.sample_sizes() {
        let budgets = config.ssl_budgets(settings, m)?;
        let outcomes: Vec<Result<f64>> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let mut data = stage_rng(config.seed, m, t, DATA);
                    let labeled = dist.sample_labeled(m, &mut data);
                    let unlabeled = dist.sample_points(budgets.n_unlabeled, &mut data);
                    let h = private_cssl(
                        &labeled,
                        &unlabeled,
                        &budget,
                        &budgets,
                        &mut stage_rng(config.seed, m, t, FIT),
                    )?;
                    Ok(f64::from(u8::from(h.error_vs_threshold(*cut) <= budgets.alpha)))
                })
                .collect()
        });
        let wins = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        let (rate, stderr) = mean_and_stderr(&wins);
        rows.push(SslRow {
            m_labeled: m,
            n_unlabeled: budgets.n_unlabeled,
            trials: wins.len(),
            success_rate: rate,
            stderr,
        });
    }
    Ok(rows)
}

/// Writes a header and records as CSV.
pub fn write_csv<W: Write>(out: W, header: &[&str], records: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// privacy audit

/// A mechanism under audit together with its own parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    /// PCL fitted at `epsilon · noise_divisor`, so a divisor above 1 shrinks
    /// the noise below what the claimed `epsilon` needs.
    Pcl {
        epsilon: f64,
        #[serde(default = "one")]
        noise_divisor: f64,
    },
    Pcl2 {
        epsilon: f64,
        #[serde(default)]
        space: Option<SpaceDescriptor>,
    },
    /// Claimed guarantee is `(2ε, 2δ)`.
    Pcl2b {
        epsilon: f64,
        delta: f64,
        #[serde(default)]
        space: Option<SpaceDescriptor>,
    },
    /// Stability histogram of the grid cells of the label-1 points.
    StableHistogram {
        epsilon: f64,
        delta: f64,
        #[serde(default = "quarter")]
        cell_side: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn quarter() -> f64 {
    0.25
}

impl MechanismSpec {
    pub fn name(&self) -> String {
        match self {
            MechanismSpec::Pcl { noise_divisor, .. } if *noise_divisor != 1.0 => {
                format!("pcl(noise/{noise_divisor})")
            }
            MechanismSpec::Pcl { .. } => "pcl".into(),
            MechanismSpec::Pcl2 { .. } => "pcl2".into(),
            MechanismSpec::Pcl2b { .. } => "pcl2b".into(),
            MechanismSpec::StableHistogram { .. } => "stable_histogram".into(),
        }
    }

    /// The `(ε, δ)` guarantee the mechanism is supposed to meet.
    pub fn claimed(&self) -> (f64, f64) {
        match *self {
            MechanismSpec::Pcl { epsilon, .. } | MechanismSpec::Pcl2 { epsilon, .. } => (epsilon, 0.0),
            MechanismSpec::Pcl2b { epsilon, delta, .. } => (2.0 * epsilon, 2.0 * delta),
            MechanismSpec::StableHistogram { epsilon, delta, .. } => (epsilon, delta),
        }
    }

    fn validate(&self) -> Result<()> {
        let (eps, delta, needs_delta) = match *self {
            MechanismSpec::Pcl { epsilon, noise_divisor } => {
                if !(noise_divisor > 0.0) {
                    return Err(config_err("noise_divisor must be positive"));
                }
                (epsilon, 0.0, false)
            }
            MechanismSpec::Pcl2 { epsilon, .. } => (epsilon, 0.0, false),
            MechanismSpec::Pcl2b { epsilon, delta, .. } => (epsilon, delta, true),
            MechanismSpec::StableHistogram { epsilon, delta, cell_side } => {
                if !(cell_side > 0.0) {
                    return Err(config_err("cell_side must be positive"));
                }
                (epsilon, delta, true)
            }
        };
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(config_err("epsilon must be positive"));
        }
        if needs_delta && !(delta > 0.0 && delta < 1.0) {
            return Err(config_err("delta must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Mechanism prepared for repeated runs on samples of one fixed size.
enum Prepared {
    Pcl { epsilon: f64 },
    Pcl2 { partition: MetricPartition, epsilon: f64 },
    Pcl2b { partition: MetricPartition, budget: PrivacyBudget },
    Histogram { grid: GridPartition, tracked: Vec<crate::partition::GridCell>, budget: PrivacyBudget },
}

fn infer_space(space: &Option<SpaceDescriptor>, dim: usize) -> SpaceDescriptor {
    space.clone().unwrap_or(SpaceDescriptor::UnitCube { dim })
}

impl Prepared {
    fn new(spec: &MechanismSpec, n: usize, dim: usize) -> Result<Self> {
        Ok(match spec {
            MechanismSpec::Pcl { epsilon, noise_divisor } => Prepared::Pcl {
                epsilon: epsilon * noise_divisor,
            },
            MechanismSpec::Pcl2 { epsilon, space } => Prepared::Pcl2 {
                partition: metric_partition_for(&infer_space(space, dim), n)?,
                epsilon: *epsilon,
            },
            MechanismSpec::Pcl2b { epsilon, delta, space } => Prepared::Pcl2b {
                partition: metric_partition_for(&infer_space(space, dim), n)?,
                budget: PrivacyBudget::new(*epsilon, *delta)?,
            },
            MechanismSpec::StableHistogram { epsilon, delta, cell_side } => {
                let grid = GridPartition::at_origin(dim, *cell_side)?;
                let per = (1.0 / cell_side).ceil().max(1.0) as i64;
                // the first cells along axis 0
                let tracked = (0..per.min(MAX_EVENT_BITS as i64))
                    .map(|i| {
                        let mut c = vec![0; dim];
                        c[0] = i;
                        crate::partition::GridCell(c)
                    })
                    .collect();
                Prepared::Histogram {
                    grid,
                    tracked,
                    budget: PrivacyBudget::new(*epsilon, *delta)?,
                }
            }
        })
    }

    /// Runs the mechanism once and coarsens the output to an event id.
    fn event(&self, sample: &LabeledSample, probes: &[Vec<f64>], rng: &mut SeededRng) -> Result<u64> {
        let bits = |clf: &dyn Fn(&[f64]) -> bool| {
            probes
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, p)| acc | (u64::from(clf(p)) << i))
        };
        Ok(match self {
            Prepared::Pcl { epsilon } => {
                let clf = pcl_fit(sample, *epsilon, rng)?;
                bits(&|x| clf.predict(x))
            }
            Prepared::Pcl2 { partition, epsilon } => {
                let (clf, _) = pcl2_fit_on(partition.clone(), sample, *epsilon, rng)?;
                bits(&|x| clf.predict(x))
            }
            Prepared::Pcl2b { partition, budget } => {
                let (clf, _) = pcl2b_fit_on(partition.clone(), sample, budget, rng)?;
                bits(&|x| clf.predict(x))
            }
            Prepared::Histogram { grid, tracked, budget } => {
                let keys = sample
                    .iter()
                    .filter(|(_, y)| *y)
                    .map(|(x, _)| grid.cell_of(x))
                    .collect::<Result<Vec<_>>>()?;
                let hist = stable_histogram(keys, budget, rng)?;
                tracked
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, c)| acc | (u64::from(hist.contains(c)) << i))
            }
        })
    }
}

/// Upper bound on probe points or tracked cells per audit.
pub const MAX_EVENT_BITS: usize = 8;

/// Default probe grid: the midpoints of four equal slices of the first axis.
pub fn default_probes(space: &SpaceDescriptor) -> Vec<Vec<f64>> {
    let ts = [0.125, 0.375, 0.625, 0.875];
    match space {
        SpaceDescriptor::Circle => ts.iter().map(|t| vec![t * 2.0 * std::f64::consts::PI]).collect(),
        SpaceDescriptor::UnitCube { dim } => ts.iter().map(|t| vec![*t; *dim]).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditEvent {
    /// Bit pattern of the coarsened output.
    pub event: u64,
    pub p_hat: f64,
    pub q_hat: f64,
    /// `max(p̂ − e^ε q̂ − δ, q̂ − e^ε p̂ − δ)`
    pub statistic: f64,
    /// 3σ width of the statistic's worse direction.
    pub slack: f64,
}

impl AuditEvent {
    pub fn passes(&self) -> bool {
        self.statistic <= self.slack
    }
}

/// Outcome of an empirical privacy audit. A PASS is statistical evidence
/// that no coarsened event violates the claimed guarantee; it is not a
/// proof of privacy.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub mechanism: String,
    pub pair: String,
    pub epsilon: f64,
    pub delta: f64,
    pub runs: usize,
    pub events: Vec<AuditEvent>,
    pub max_violation: f64,
    /// Slack belonging to the event attaining `max_violation`.
    pub max_violation_slack: f64,
    pub pass: bool,
}

pub const AUDIT_HEADER: [&str; 6] = ["event", "p_hat", "q_hat", "statistic", "slack", "pass"];

impl AuditReport {
    pub fn records(&self) -> Vec<Vec<String>> {
        self.events
            .iter()
            .map(|e| {
                vec![
                    format!("{:b}", e.event),
                    e.p_hat.to_string(),
                    e.q_hat.to_string(),
                    e.statistic.to_string(),
                    e.slack.to_string(),
                    e.passes().to_string(),
                ]
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} on {}: eps={} delta={} runs={} max_violation={:.6} slack={:.6} -> {}",
            self.mechanism,
            self.pair,
            self.epsilon,
            self.delta,
            self.runs,
            self.max_violation,
            self.max_violation_slack,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// One direction of the test: `a − e^ε b − δ` with its standard deviation
/// evaluated at the boundary of the null hypothesis.
fn directional(a: f64, b: f64, eps: f64, delta: f64, runs: f64) -> (f64, f64) {
    let ee = eps.exp();
    let stat = a - ee * b - delta;
    let pa = a.max(ee * b + delta).min(1.0);
    let pb = b.max((a - delta) / ee).min(1.0);
    let var = pa * (1.0 - pa) / runs + ee * ee * pb * (1.0 - pb) / runs;
    (stat, 3.0 * var.sqrt())
}

/// Runs `mechanism` `runs` times on each of two neighboring samples and
/// compares the event frequencies against its claimed guarantee.
pub fn audit_privacy(
    mechanism: &MechanismSpec,
    s: &LabeledSample,
    s_prime: &LabeledSample,
    probes: &[Vec<f64>],
    runs: usize,
    rng: &mut SeededRng,
) -> Result<AuditReport> {
    mechanism.validate()?;
    match s.hamming_distance(s_prime) {
        Some(d) if d <= 1 => {}
        Some(d) => return Err(Error::input(format!("samples differ in {d} records"))),
        None => return Err(Error::input("samples have different sizes")),
    }
    let dim = s.dim().ok_or_else(|| Error::input("cannot audit on an empty sample"))?;
    if runs == 0 {
        return Err(Error::param("runs must be positive"));
    }
    if probes.len() > MAX_EVENT_BITS {
        return Err(Error::param(format!("at most {MAX_EVENT_BITS} probe points")));
    }
    if probes.is_empty() && !matches!(mechanism, MechanismSpec::StableHistogram { .. }) {
        return Err(Error::param("classifier audits need probe points"));
    }
    let prepared = Prepared::new(mechanism, s.len(), dim)?;
    let base = rand::RngCore::next_u64(rng);
    let tally = |which: u64, sample: &LabeledSample| -> Result<BTreeMap<u64, usize>> {
        (0..runs)
            .into_par_iter()
            .map(|i| prepared.event(sample, probes, &mut SeededRng::derive(base, &[which, i as u64])))
            .try_fold(BTreeMap::new, |mut acc, e| {
                *acc.entry(e?).or_insert(0usize) += 1;
                Ok(acc)
            })
            .try_reduce(BTreeMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_insert(0) += v;
                }
                Ok(a)
            })
    };
    let p = tally(0, s)?;
    let q = tally(1, s_prime)?;
    let (eps, delta) = mechanism.claimed();
    let r = runs as f64;
    let mut keys: Vec<u64> = p.keys().chain(q.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let events: Vec<AuditEvent> = keys
        .into_iter()
        .map(|k| {
            let ph = p.get(&k).copied().unwrap_or(0) as f64 / r;
            let qh = q.get(&k).copied().unwrap_or(0) as f64 / r;
            let (s1, w1) = directional(ph, qh, eps, delta, r);
            let (s2, w2) = directional(qh, ph, eps, delta, r);
            let (statistic, slack) = if s1 - w1 >= s2 - w2 { (s1, w1) } else { (s2, w2) };
            AuditEvent {
                event: k,
                p_hat: ph,
                q_hat: qh,
                statistic,
                slack,
            }
        })
        .collect();
    let worst = events
        .iter()
        .max_by(|a, b| a.statistic.total_cmp(&b.statistic))
        .expect("at least one event occurs");
    Ok(AuditReport {
        mechanism: mechanism.name(),
        pair: describe_pair(s, s_prime),
        epsilon: eps,
        delta,
        runs,
        max_violation: worst.statistic,
        max_violation_slack: worst.slack,
        pass: events.iter().all(AuditEvent::passes),
        events,
    })
}

fn describe_pair(s: &LabeledSample, t: &LabeledSample) -> String {
    match s.iter().zip(t.iter()).position(|(a, b)| a != b) {
        None => format!("identical samples of size {}", s.len()),
        Some(i) => format!(
            "n={} differing at record {i}: {:?}/{} vs {:?}/{}",
            s.len(),
            s.points()[i],
            u8::from(s.labels()[i]),
            t.points()[i],
            u8::from(t.labels()[i])
        ),
    }
}

/// Replace-one neighbor description inside an audit config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborSpec {
    pub index: usize,
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub label: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

fn default_runs() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub mechanism: MechanismSpec,
    pub sample: SampleSpec,
    pub neighbor: NeighborSpec,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub probes: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl AuditConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AuditConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.samples()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The sample and its neighbor; also validates the config.
    pub fn samples(&self) -> Result<(LabeledSample, LabeledSample)> {
        self.mechanism.validate()?;
        if self.runs == 0 {
            return Err(config_err("runs must be positive"));
        }
        if self.probes.as_ref().is_some_and(|p| p.len() > MAX_EVENT_BITS) {
            return Err(config_err(format!("at most {MAX_EVENT_BITS} probes")));
        }
        let s = LabeledSample::new(self.sample.points.clone(), self.sample.labels.clone())
            .map_err(|e| config_err(e.to_string()))?;
        let i = self.neighbor.index;
        if i >= s.len() {
            return Err(config_err(format!("neighbor index {i} is out of range")));
        }
        let point = self.neighbor.point.clone().unwrap_or_else(|| s.points()[i].clone());
        let label = self.neighbor.label.unwrap_or(s.labels()[i]);
        let t = s.with_replaced(i, point, label).map_err(|e| config_err(e.to_string()))?;
        Ok((s, t))
    }

    pub fn probe_points(&self, dim: usize) -> Vec<Vec<f64>> {
        if let Some(p) = &self.probes {
            return p.clone();
        }
        let space = match &self.mechanism {
            MechanismSpec::Pcl2 { space, .. } | MechanismSpec::Pcl2b { space, .. } => infer_space(space, dim),
            _ => SpaceDescriptor::UnitCube { dim },
        };
        default_probes(&space)
    }

    pub fn run(&self, threads: usize) -> Result<AuditReport> {
        let (s, t) = self.samples()?;
        let probes = self.probe_points(s.dim().unwrap_or(1));
        let mut rng = SeededRng::new(self.seed, 0);
        thread_pool(threads)?.install(|| audit_privacy(&self.mechanism, &s, &t, &probes, self.runs, &mut rng))
    }
}
