//! Differential-privacy primitives.
//!
//! The Laplace sampler, the vector Laplace mechanism, and the sparse
//! stability-based histogram. All noise is drawn by inverse-CDF from a single
//! uniform per value, so a fixed [`SeededRng`] reproduces every release
//! bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Privacy parameters `(epsilon, delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::param(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Budget consumed by running `k` mechanisms with this budget in sequence.
    pub fn compose(&self, k: u32) -> PrivacyBudget {
        PrivacyBudget {
            epsilon: self.epsilon * k as f64,
            delta: (self.delta * k as f64).min(1.0 - f64::EPSILON),
        }
    }
}

/// One draw from the zero-mean Laplace distribution with the given scale.
pub fn sample_laplace(scale: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param(format!("laplace scale must be positive, got {scale}")));
    }
    Ok(laplace_from_uniform(scale, rng.open_unit()))
}

/// Inverse CDF of Lap(scale) evaluated at `u` in (0, 1).
pub(crate) fn laplace_from_uniform(scale: f64, u: f64) -> f64 {
    let c = u - 0.5;
    -scale * c.signum() * (-2.0 * c.abs()).ln_1p()
}

/// Adds i.i.d. `Lap(l1_sensitivity / epsilon)` noise to each coordinate.
pub fn laplace_mechanism(
    values: &[f64],
    l1_sensitivity: f64,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if !(l1_sensitivity > 0.0) {
        return Err(Error::param(format!("sensitivity must be positive, got {l1_sensitivity}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let scale = l1_sensitivity / epsilon;
    values
        .iter()
        .map(|v| sample_laplace(scale, rng).map(|w| v + w))
        .collect()
}

/// Cut-off below which a noisy count is suppressed: `(2/ε)·ln(2/δ) + 1`.
pub fn stability_threshold(budget: &PrivacyBudget) -> f64 {
    2.0 / budget.epsilon * (2.0 / budget.delta).ln() + 1.0
}

/// Sparse noisy counts keyed by cell id. Keys not stored read as exactly 0.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyHistogram<K: Ord> {
    entries: BTreeMap<K, f64>,
    total_n: usize,
}

impl<K: Ord> NoisyHistogram<K> {
    pub fn get(&self, key: &K) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Number of stored (nonzero) cells.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Size of the input key sequence.
    pub fn total_n(&self) -> usize {
        self.total_n
    }

    pub fn into_entries(self) -> BTreeMap<K, f64> {
        self.entries
    }
}

/// Raw multiplicities of a key sequence, in key order.
pub fn count_keys<K: Ord>(keys: impl IntoIterator<Item = K>) -> (BTreeMap<K, u64>, usize) {
    let mut counts = BTreeMap::new();
    let mut n = 0;
    for k in keys {
        *counts.entry(k).or_insert(0) += 1;
        n += 1;
    }
    (counts, n)
}

/// Stability-based histogram.
///
/// Each distinct key with raw count `c` gets `c + Lap(2/ε)`; the result is
/// kept iff it is at least [`stability_threshold`]. Keys absent from the
/// input are never stored. Noise is drawn in key order.
pub fn stable_histogram<K: Ord>(
    keys: impl IntoIterator<Item = K>,
    budget: &PrivacyBudget,
    rng: &mut SeededRng,
) -> Result<NoisyHistogram<K>> {
    let (counts, total_n) = count_keys(keys);
    stable_histogram_from_counts(counts, total_n, budget, rng)
}

pub(crate) fn stable_histogram_from_counts<K: Ord>(
    counts: BTreeMap<K, u64>,
    total_n: usize,
    budget: &PrivacyBudget,
    rng: &mut SeededRng,
) -> Result<NoisyHistogram<K>> {
    if budget.delta <= 0.0 {
        return Err(Error::param(
            "stability-based histogram needs delta > 0",
        ));
    }
    let threshold = stability_threshold(budget);
    let scale = 2.0 / budget.epsilon;
    let mut entries = BTreeMap::new();
    for (key, c) in counts {
        let noisy = c as f64 + sample_laplace(scale, rng)?;
        // strictly-below is suppressed; equality survives
        if noisy >= threshold {
            entries.insert(key, noisy);
        }
    }
    Ok(NoisyHistogram { entries, total_n })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid integral of g·Lap(b) density over [-60b, 60b].
    fn laplace_moment(b: f64, g: impl Fn(f64) -> f64) -> f64 {
        let steps = 400_000;
        let lo = -60.0 * b;
        let h = 120.0 * b / steps as f64;
        let dens = |x: f64| (-(x.abs()) / b).exp() / (2.0 * b);
        let mut acc = 0.5 * (g(lo) * dens(lo) + g(-lo) * dens(-lo));
        for i in 1..steps {
            let x = lo + i as f64 * h;
            acc += g(x) * dens(x);
        }
        acc * h
    }

    #[test]
    fn quadrature_oracle_moments() {
        for b in [0.5, 1.0, 2.0] {
            assert!((laplace_moment(b, f64::abs) - b).abs() < 1e-6);
            assert!((laplace_moment(b, |x| x * x) - 2.0 * b * b).abs() < 1e-5);
        }
    }

    #[test]
    fn laplace_mean_abs_and_variance() {
        let draws = 1_000_000;
        for (stream, b) in [1.0_f64, 2.5].into_iter().enumerate() {
            let mut rng = SeededRng::new(11, stream as u64);
            let xs: Vec<f64> = (0..draws)
                .map(|_| sample_laplace(b, &mut rng).unwrap())
                .collect();
            let mean = xs.iter().sum::<f64>() / draws as f64;
            let mean_abs = xs.iter().map(|x| x.abs()).sum::<f64>() / draws as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws as f64;
            assert!(mean.abs() < 0.01 * b, "mean {mean}");
            let abs_oracle = laplace_moment(b, f64::abs);
            let var_oracle = laplace_moment(b, |x| x * x);
            assert!((mean_abs / abs_oracle - 1.0).abs() < 0.02, "E|X| {mean_abs}");
            assert!((var / var_oracle - 1.0).abs() < 0.03, "Var {var}");
        }
    }

    #[test]
    fn non_positive_scale_rejected() {
        let mut rng = SeededRng::new(0, 0);
        assert!(matches!(sample_laplace(0.0, &mut rng), Err(Error::InvalidParameter(_))));
        assert!(sample_laplace(-1.0, &mut rng).is_err());
        assert!(sample_laplace(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn mechanism_adds_the_stream_draw() {
        let mut a = SeededRng::new(5, 9);
        let mut b = SeededRng::new(5, 9);
        let w = sample_laplace(1.0, &mut a).unwrap();
        let out = laplace_mechanism(&[5.0], 1.0, 1.0, &mut b).unwrap();
        assert_eq!(out, vec![5.0 + w]);
    }

    #[test]
    fn mechanism_empty_vector() {
        let mut rng = SeededRng::new(0, 0);
        assert!(laplace_mechanism(&[], 1.0, 1.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn mechanism_zero_mean_and_scale() {
        let runs = 100_000;
        let mut rng = SeededRng::new(3, 0);
        let mut sums = [0.0; 3];
        for _ in 0..runs {
            let out = laplace_mechanism(&[0.0, 0.0, 0.0], 1.0, 1.0, &mut rng).unwrap();
            for (s, v) in sums.iter_mut().zip(out) {
                *s += v;
            }
        }
        for s in sums {
            assert!((s / runs as f64).abs() < 0.05);
        }

        // sensitivity 1, epsilon 0.5: E|Lap(2)| = 2
        let mut abs = 0.0;
        for _ in 0..runs {
            abs += laplace_mechanism(&[0.0], 1.0, 0.5, &mut rng).unwrap()[0].abs();
        }
        let oracle = laplace_moment(2.0, f64::abs);
        assert!((abs / runs as f64 / oracle - 1.0).abs() < 0.02);
    }

    #[test]
    fn mechanism_rejects_bad_parameters() {
        let mut rng = SeededRng::new(0, 0);
        assert!(laplace_mechanism(&[1.0], 0.0, 1.0, &mut rng).is_err());
        assert!(laplace_mechanism(&[1.0], 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn threshold_value() {
        let b = PrivacyBudget::new(1.0, 0.1).unwrap();
        let t = stability_threshold(&b);
        assert!((t - (2.0 * 20f64.ln() + 1.0)).abs() < 1e-12);
        assert!((t - 6.9915).abs() < 1e-4);
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0.1).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, -0.1).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY, 0.1).is_err());
        let b = PrivacyBudget::new(1.0, 0.01).unwrap().compose(2);
        assert_eq!((b.epsilon(), b.delta()), (2.0, 0.02));
    }

    #[test]
    fn pure_budget_rejected_by_histogram() {
        let mut rng = SeededRng::new(0, 0);
        let b = PrivacyBudget::pure(1.0).unwrap();
        let r = stable_histogram(vec![1u32, 2, 2], &b, &mut rng);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn absent_key_is_exact_zero() {
        let mut rng = SeededRng::new(1, 1);
        let b = PrivacyBudget::new(1.0, 0.1).unwrap();
        let keys: Vec<u32> = std::iter::repeat(4).take(50).collect();
        let h = stable_histogram(keys, &b, &mut rng).unwrap();
        assert_eq!(h.get(&7), 0.0);
        assert!(!h.contains(&7));
        assert_eq!(h.total_n(), 50);
    }

    #[test]
    fn large_count_accuracy() {
        let b = PrivacyBudget::new(1.0, 0.01).unwrap();
        let runs = 10_000;
        let mut rng = SeededRng::new(2, 0);
        let mut err = 0.0;
        for _ in 0..runs {
            let h = stable_histogram(std::iter::repeat(0u8).take(1000), &b, &mut rng).unwrap();
            err += (h.get(&0) - 1000.0).abs();
        }
        assert!(err / runs as f64 <= 2.2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn support_and_threshold(
                keys in proptest::collection::vec(0u8..12, 0..200),
                seed in any::<u64>(),
                eps in 0.1f64..4.0,
                delta in 1e-6f64..0.5,
            ) {
                let b = PrivacyBudget::new(eps, delta).unwrap();
                let mut rng = SeededRng::new(seed, 0);
                let h = stable_histogram(keys.clone(), &b, &mut rng).unwrap();
                let t = stability_threshold(&b);
                for (k, v) in h.iter() {
                    prop_assert!(keys.contains(k));
                    prop_assert!(v >= t);
                }
            }
        }
    }
}
