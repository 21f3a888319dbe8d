//! Two-sample distribution comparison: Kolmogorov-Smirnov statistic,
//! Monte Carlo permutation p-values, 1-D Wasserstein distance, and the
//! Bonferroni familywise bound.
//!
//! Refusals are carried alongside the numeric values; before any comparison
//! both samples are extended with a sentinel value placed strictly below the
//! minimum of both numeric supports, so differing refusal rates register as a
//! distributional difference.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("p-value list is empty")]
    EmptyList,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("p-value {0} outside (0, 1]")]
    BadPValue(f64),
}

/// Statistic driving a permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatKind {
    Ks,
    Wasserstein,
}

/// One comparison sample: numeric forecast values plus a refusal count.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
    pub refusal_count: usize,
}

impl Sample {
    pub fn new(values: Vec<f64>, refusal_count: usize) -> Result<Self, StatsError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Sample {
            values,
            refusal_count,
        })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self, StatsError> {
        Sample::new(values, 0)
    }

    /// Numeric values plus mapped refusals.
    pub fn len(&self) -> usize {
        self.values.len() + self.refusal_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The result of comparing two forecast distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub ks_stat: f64,
    pub p_value: f64,
    pub wasserstein: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub n_perm: u32,
    pub seed: u64,
}

/// Sentinel used for refusals: strictly below the minimum of both numeric
/// supports, shared by both sides of a comparison.
fn refusal_sentinel(a: &Sample, b: &Sample) -> f64 {
    a.values
        .iter()
        .chain(b.values.iter())
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(0.0)
        - 1.0
}

/// Both samples with refusals mapped onto the common sentinel.
fn extended_pair(a: &Sample, b: &Sample) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let sentinel = refusal_sentinel(a, b);
    let extend = |s: &Sample| {
        let mut v = s.values.clone();
        v.extend(std::iter::repeat(sentinel).take(s.refusal_count));
        v
    };
    Ok((extend(a), extend(b)))
}

/// Pooled values sorted ascending, with `true` tagging membership in `a`.
fn sorted_pool(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut tagged: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    tagged.sort_by(|x, y| x.0.total_cmp(&y.0));
    tagged.into_iter().unzip()
}

/// KS numerator max |ca*nb - cb*na| over pooled points, computed in one pass
/// over the sorted pool. Ties are handled by advancing both ECDFs across a
/// run of equal values before evaluating. Integer-exact.
fn ks_numerator(sorted: &[f64], in_a: &[bool], n_a: usize, n_b: usize) -> u64 {
    let (n_a, n_b) = (n_a as i64, n_b as i64);
    let mut ca: i64 = 0;
    let mut cb: i64 = 0;
    let mut best: i64 = 0;
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        while i < n && sorted[i] == v {
            if in_a[i] {
                ca += 1;
            } else {
                cb += 1;
            }
            i += 1;
        }
        best = best.max((ca * n_b - cb * n_a).abs());
    }
    best as u64
}

/// 1-Wasserstein over the sorted pool: integral of |ECDF_a - ECDF_b|.
fn wasserstein_on_pool(sorted: &[f64], in_a: &[bool], n_a: usize, n_b: usize) -> f64 {
    let (fa, fb) = (n_a as f64, n_b as f64);
    let mut ca: f64 = 0.0;
    let mut cb: f64 = 0.0;
    let mut total = 0.0;
    for i in 0..sorted.len() {
        if in_a[i] {
            ca += 1.0;
        } else {
            cb += 1.0;
        }
        if i + 1 < sorted.len() {
            total += (ca / fa - cb / fb).abs() * (sorted[i + 1] - sorted[i]);
        }
    }
    total
}

/// Two-sample Kolmogorov-Smirnov statistic:
/// sup over pooled points of |ECDF_a - ECDF_b|, in [0, 1].
pub fn ks_statistic(a: &Sample, b: &Sample) -> Result<f64, StatsError> {
    let (ea, eb) = extended_pair(a, b)?;
    let (n_a, n_b) = (ea.len(), eb.len());
    let (sorted, in_a) = sorted_pool(&ea, &eb);
    Ok(ks_numerator(&sorted, &in_a, n_a, n_b) as f64 / (n_a as f64 * n_b as f64))
}

/// 1-Wasserstein distance between the empirical distributions (the integrated
/// absolute difference of quantile functions).
pub fn wasserstein(a: &Sample, b: &Sample) -> Result<f64, StatsError> {
    let (ea, eb) = extended_pair(a, b)?;
    let (n_a, n_b) = (ea.len(), eb.len());
    let (sorted, in_a) = sorted_pool(&ea, &eb);
    Ok(wasserstein_on_pool(&sorted, &in_a, n_a, n_b))
}

/// Conservative Monte Carlo permutation p-value for the chosen statistic:
/// `(1 + #{permuted >= observed}) / (1 + n_perm)`. Label reassignments are
/// sampled uniformly preserving group sizes. Deterministic given `seed`.
pub fn permutation_pvalue(
    a: &Sample,
    b: &Sample,
    statistic: StatKind,
    n_perm: u32,
    seed: u64,
) -> Result<f64, StatsError> {
    if n_perm == 0 {
        return Err(StatsError::EmptyList);
    }
    let (ea, eb) = extended_pair(a, b)?;
    let (n_a, n_b) = (ea.len(), eb.len());
    let n = n_a + n_b;
    let (sorted, in_a) = sorted_pool(&ea, &eb);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut indices: Vec<u32> = (0..n as u32).collect();
    let mut mask = vec![false; n];
    let mut exceed: u64 = 0;

    match statistic {
        StatKind::Ks => {
            let observed = ks_numerator(&sorted, &in_a, n_a, n_b);
            for _ in 0..n_perm {
                shuffle_mask(&mut rng, &mut indices, &mut mask, n_a);
                if ks_numerator(&sorted, &mask, n_a, n_b) >= observed {
                    exceed += 1;
                }
            }
        }
        StatKind::Wasserstein => {
            let observed = wasserstein_on_pool(&sorted, &in_a, n_a, n_b);
            for _ in 0..n_perm {
                shuffle_mask(&mut rng, &mut indices, &mut mask, n_a);
                if wasserstein_on_pool(&sorted, &mask, n_a, n_b) >= observed {
                    exceed += 1;
                }
            }
        }
    }
    Ok((1 + exceed) as f64 / (1 + u64::from(n_perm)) as f64)
}

/// Draws a uniform size-preserving label assignment into `mask`.
fn shuffle_mask(rng: &mut ChaCha12Rng, indices: &mut [u32], mask: &mut [bool], n_a: usize) {
    let n = indices.len();
    for k in 0..n_a {
        let j = rng.gen_range(k..n);
        indices.swap(k, j);
    }
    mask.fill(false);
    for &i in &indices[..n_a] {
        mask[i as usize] = true;
    }
}

/// Bonferroni familywise bound: `min(1, m * min(p_values))`.
pub fn bonferroni_bound(p_values: &[f64]) -> Result<f64, StatsError> {
    if p_values.is_empty() {
        return Err(StatsError::EmptyList);
    }
    let mut min_p = f64::INFINITY;
    for &p in p_values {
        if !(p > 0.0 && p <= 1.0) {
            return Err(StatsError::BadPValue(p));
        }
        min_p = min_p.min(p);
    }
    Ok((p_values.len() as f64 * min_p).min(1.0))
}

/// Runs the full comparison recorded per protocol cell: KS statistic,
/// permutation p-value on `statistic`, and the Wasserstein distance.
pub fn compare(
    a: &Sample,
    b: &Sample,
    statistic: StatKind,
    n_perm: u32,
    seed: u64,
) -> Result<ComparisonResult, StatsError> {
    Ok(ComparisonResult {
        ks_stat: ks_statistic(a, b)?,
        p_value: permutation_pvalue(a, b, statistic, n_perm, seed)?,
        wasserstein: wasserstein(a, b)?,
        n_a: a.len(),
        n_b: b.len(),
        n_perm,
        seed,
    })
}

/// Self-comparison convention used on matrix diagonals.
pub fn identity_comparison(sample: &Sample, n_perm: u32, seed: u64) -> ComparisonResult {
    ComparisonResult {
        ks_stat: 0.0,
        p_value: 1.0,
        wasserstein: 0.0,
        n_a: sample.len(),
        n_b: sample.len(),
        n_perm,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn s(values: &[f64]) -> Sample {
        Sample::from_values(values.to_vec()).unwrap()
    }

    /// Exact permutation p-value by enumerating every size-preserving label
    /// assignment. Independent oracle for the Monte Carlo implementation.
    fn exhaustive_pvalue(a: &Sample, b: &Sample, statistic: StatKind) -> f64 {
        let (ea, eb) = extended_pair(a, b).unwrap();
        let pooled: Vec<f64> = ea.iter().chain(eb.iter()).copied().collect();
        let n_a = ea.len();
        let stat = |xs: &[f64], ys: &[f64]| -> f64 {
            let xa = Sample::from_values(xs.to_vec()).unwrap();
            let xb = Sample::from_values(ys.to_vec()).unwrap();
            match statistic {
                StatKind::Ks => ks_statistic(&xa, &xb).unwrap(),
                StatKind::Wasserstein => wasserstein(&xa, &xb).unwrap(),
            }
        };
        let observed = stat(&ea, &eb);
        let mut hits = 0usize;
        let mut total = 0usize;
        for combo in (0..pooled.len()).combinations(n_a) {
            let in_a: Vec<bool> = {
                let mut m = vec![false; pooled.len()];
                for &i in &combo {
                    m[i] = true;
                }
                m
            };
            let xs: Vec<f64> = pooled
                .iter()
                .zip(&in_a)
                .filter(|(_, &t)| t)
                .map(|(&v, _)| v)
                .collect();
            let ys: Vec<f64> = pooled
                .iter()
                .zip(&in_a)
                .filter(|(_, &t)| !t)
                .map(|(&v, _)| v)
                .collect();
            if stat(&xs, &ys) >= observed - 1e-12 {
                hits += 1;
            }
            total += 1;
        }
        hits as f64 / total as f64
    }

    #[test]
    fn ks_identity_is_zero() {
        let a = s(&[1.0, 2.0, 3.0]);
        assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ks_interleaved_supports() {
        // pooled points 1,2,3,4: ECDF gaps are 1/2 at 1 and 3
        assert_eq!(ks_statistic(&s(&[1.0, 3.0]), &s(&[2.0, 4.0])).unwrap(), 0.5);
    }

    #[test]
    fn ks_disjoint_supports() {
        assert_eq!(ks_statistic(&s(&[1.0, 2.0]), &s(&[3.0, 4.0])).unwrap(), 1.0);
    }

    #[test]
    fn ks_handles_ties_across_samples() {
        // ECDFs evaluated at pooled values {1, 2}: |1/2 - 1/2| then |1 - 1|
        assert_eq!(ks_statistic(&s(&[1.0, 2.0]), &s(&[1.0, 2.0])).unwrap(), 0.0);
        // {0,0} vs {0,1}: at 0 |1 - 1/2| = 1/2
        assert_eq!(ks_statistic(&s(&[0.0, 0.0]), &s(&[0.0, 1.0])).unwrap(), 0.5);
    }

    #[test]
    fn wasserstein_examples() {
        let a = s(&[0.0]);
        assert_eq!(wasserstein(&a, &a).unwrap(), 0.0);
        assert_eq!(wasserstein(&s(&[0.0]), &s(&[1.0])).unwrap(), 1.0);
        assert_eq!(wasserstein(&s(&[0.0, 0.0]), &s(&[0.0, 2.0])).unwrap(), 1.0);
        // unequal sizes: quantile functions differ on the upper half by 3
        assert_eq!(wasserstein(&s(&[0.0]), &s(&[0.0, 3.0])).unwrap(), 1.5);
    }

    #[test]
    fn empty_samples_are_rejected() {
        let empty = Sample::default();
        let a = s(&[1.0]);
        assert_eq!(ks_statistic(&empty, &a), Err(StatsError::EmptySample));
        assert_eq!(wasserstein(&a, &empty), Err(StatsError::EmptySample));
        assert_eq!(
            permutation_pvalue(&empty, &a, StatKind::Ks, 10, 0),
            Err(StatsError::EmptySample)
        );
    }

    #[test]
    fn refusals_map_strictly_below_both_supports() {
        let a = Sample::new(vec![2.0, 3.0], 2).unwrap();
        let b = s(&[1.0, 4.0]);
        // refusals act as mass at min(1.0, 0.0) - 1 = -1, so distributions differ
        let d = ks_statistic(&a, &b).unwrap();
        assert!(d >= 0.5, "refusal mass must register, got {d}");
        let same_rates = Sample::new(vec![2.0, 3.0], 1).unwrap();
        let other = Sample::new(vec![2.0, 3.0], 1).unwrap();
        assert_eq!(ks_statistic(&same_rates, &other).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_null_gives_pvalue_one() {
        let a = s(&[1.5, 1.5, 1.5]);
        let p = permutation_pvalue(&a, &a, StatKind::Ks, 500, 7).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn pvalue_is_deterministic_given_seed() {
        let a = s(&[1.0, 2.0, 5.0, 3.0]);
        let b = s(&[2.5, 2.0, 4.0, 8.0]);
        let p1 = permutation_pvalue(&a, &b, StatKind::Ks, 2000, 99).unwrap();
        let p2 = permutation_pvalue(&a, &b, StatKind::Ks, 2000, 99).unwrap();
        assert_eq!(p1, p2);
        let p3 = permutation_pvalue(&a, &b, StatKind::Ks, 2000, 100).unwrap();
        // a different seed may move the estimate but stays within granularity
        assert!((p1 - p3).abs() < 0.1);
    }

    #[test]
    fn monte_carlo_matches_exhaustive_enumeration() {
        let a = s(&[1.0, 4.0, 2.0]);
        let b = s(&[3.0, 5.0, 6.0]);
        for statistic in [StatKind::Ks, StatKind::Wasserstein] {
            let exact = exhaustive_pvalue(&a, &b, statistic);
            let n_perm = 10_000u32;
            let mc = permutation_pvalue(&a, &b, statistic, n_perm, 13).unwrap();
            let se = (exact * (1.0 - exact) / n_perm as f64).sqrt();
            assert!(
                (mc - exact).abs() <= 3.0 * se + 2.0 / n_perm as f64,
                "{statistic:?}: mc={mc} exact={exact} se={se}"
            );
        }
    }

    #[test]
    fn smallest_achievable_pvalue_matches_discretization() {
        // far-apart samples: no permutation beats the observed split
        let a = s(&[0.0; 8]);
        let b = s(&[100.0; 8]);
        let p = permutation_pvalue(&a, &b, StatKind::Ks, 10_000, 3).unwrap();
        assert!((p - 1.0 / 10_001.0).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni_bound(&[0.2]).unwrap(), 0.2);
        let b = bonferroni_bound(&(0..80).map(|i| if i == 0 { 0.00008 } else { 0.5 }).collect::<Vec<_>>()).unwrap();
        assert!((b - 0.0064).abs() < 1e-12);
        assert_eq!(bonferroni_bound(&[0.5, 0.9, 0.7]).unwrap(), 1.0);
        assert_eq!(bonferroni_bound(&[]), Err(StatsError::EmptyList));
        assert!(bonferroni_bound(&[0.0]).is_err());
    }

    #[test]
    fn wasserstein_bounds_mean_difference_fuzz() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let n_a = rng.gen_range(1..12);
            let n_b = rng.gen_range(1..12);
            let a: Vec<f64> = (0..n_a).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..n_b).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mean_a = a.iter().sum::<f64>() / n_a as f64;
            let mean_b = b.iter().sum::<f64>() / n_b as f64;
            let w = wasserstein(&s(&a), &s(&b)).unwrap();
            assert!(
                w >= (mean_a - mean_b).abs() - 1e-9,
                "w={w} |dmean|={}",
                (mean_a - mean_b).abs()
            );
        }
    }

    proptest! {
        #[test]
        fn ks_and_wasserstein_are_symmetric(
            a in proptest::collection::vec(-10.0f64..10.0, 1..12),
            b in proptest::collection::vec(-10.0f64..10.0, 1..12),
        ) {
            let (sa, sb) = (s(&a), s(&b));
            prop_assert_eq!(ks_statistic(&sa, &sb).unwrap(), ks_statistic(&sb, &sa).unwrap());
            let w_ab = wasserstein(&sa, &sb).unwrap();
            let w_ba = wasserstein(&sb, &sa).unwrap();
            prop_assert!((w_ab - w_ba).abs() < 1e-12);
        }

        #[test]
        fn both_statistics_are_shift_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 1..10),
            b in proptest::collection::vec(-10.0f64..10.0, 1..10),
            shift in -25.0f64..25.0,
        ) {
            let (sa, sb) = (s(&a), s(&b));
            let sa2 = s(&a.iter().map(|v| v + shift).collect::<Vec<_>>());
            let sb2 = s(&b.iter().map(|v| v + shift).collect::<Vec<_>>());
            prop_assert_eq!(ks_statistic(&sa, &sb).unwrap(), ks_statistic(&sa2, &sb2).unwrap());
            let w1 = wasserstein(&sa, &sb).unwrap();
            let w2 = wasserstein(&sa2, &sb2).unwrap();
            prop_assert!((w1 - w2).abs() < 1e-9);
        }

        #[test]
        fn pvalues_live_on_the_permutation_lattice(
            a in proptest::collection::vec(-4.0f64..4.0, 2..8),
            b in proptest::collection::vec(-4.0f64..4.0, 2..8),
            n_perm in 1u32..200,
            seed in 0u64..1000,
        ) {
            let p = permutation_pvalue(&s(&a), &s(&b), StatKind::Ks, n_perm, seed).unwrap();
            let k = (p * (1.0 + f64::from(n_perm))).round();
            prop_assert!((p - k / (1.0 + f64::from(n_perm))).abs() < 1e-12);
            prop_assert!(p > 0.0 && p <= 1.0);
        }

        #[test]
        fn ks_stays_in_unit_interval(
            a in proptest::collection::vec(-10.0f64..10.0, 1..14),
            b in proptest::collection::vec(-10.0f64..10.0, 1..14),
        ) {
            let d = ks_statistic(&s(&a), &s(&b)).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
