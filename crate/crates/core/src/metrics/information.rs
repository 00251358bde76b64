//! Histogram entropy of timing deviations and plug-in transfer entropy.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::MetricsError;

pub const MIN_TE_LENGTH: usize = 50;

fn entropy_of_counts<I: IntoIterator<Item = usize>>(counts: I, total: usize) -> f64 {
    let n = total as f64;
    -counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Shannon entropy (bits) of deviations histogrammed into bins of
/// `bin_width` seconds, one of them centred on zero.
pub fn deviation_entropy(deviations: &[f64], bin_width: f64) -> Result<f64, MetricsError> {
    if deviations.is_empty() {
        return Err(MetricsError::Empty);
    }
    if bin_width.is_nan() || bin_width <= 0.0 {
        return Err(MetricsError::BinWidth(bin_width));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for d in deviations {
        *counts.entry((d / bin_width).round() as i64).or_default() += 1;
    }
    Ok(entropy_of_counts(counts.into_values(), deviations.len()).max(0.0))
}

/// Map values to `bins` equally populated symbols by rank. Ties share the
/// symbol of their first rank.
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut rank = 0;
    while rank < n {
        let mut end = rank + 1;
        while end < n && values[order[end]] == values[order[rank]] {
            end += 1;
        }
        let sym = (rank * bins / n.max(1)).min(bins.saturating_sub(1));
        for &i in &order[rank..end] {
            out[i] = sym;
        }
        rank = end;
    }
    out
}

/// Transfer entropy (bits) from `source` to `target`: how much the source's
/// value `source_lag` steps back reduces uncertainty about the target beyond
/// the target's own value `target_lag` steps back.
pub fn transfer_entropy(
    source: &[usize],
    target: &[usize],
    target_lag: usize,
    source_lag: usize,
) -> Result<f64, MetricsError> {
    if source.len() != target.len() {
        return Err(MetricsError::LengthMismatch(source.len(), target.len()));
    }
    let lag = target_lag.max(source_lag).max(1);
    let min = MIN_TE_LENGTH.max(lag + 1);
    if target.len() < min {
        return Err(MetricsError::TooShort {
            found: target.len(),
            min,
        });
    }
    let mut xyz: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    let mut yz: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut xy: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut y: BTreeMap<usize, usize> = BTreeMap::new();
    for t in lag..target.len() {
        let now = target[t];
        let past = target[t - target_lag.max(1)];
        let src = source[t - source_lag.max(1)];
        *xyz.entry((now, past, src)).or_default() += 1;
        *yz.entry((past, src)).or_default() += 1;
        *xy.entry((now, past)).or_default() += 1;
        *y.entry(past).or_default() += 1;
    }
    let total = target.len() - lag;
    // H(X|Y) - H(X|Y,Z) = H(X,Y) - H(Y) - H(X,Y,Z) + H(Y,Z)
    let te = entropy_of_counts(xy.into_values(), total)
        - entropy_of_counts(y.into_values(), total)
        - entropy_of_counts(xyz.into_values(), total)
        + entropy_of_counts(yz.into_values(), total);
    Ok(te)
}

/// Transfer entropy of `count` copies with the source shuffled in time.
pub fn shuffled_surrogates<R: Rng>(
    source: &[usize],
    target: &[usize],
    target_lag: usize,
    source_lag: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>, MetricsError> {
    let mut s = source.to_vec();
    (0..count)
        .map(|_| {
            s.shuffle(rng);
            transfer_entropy(&s, target, target_lag, source_lag)
        })
        .collect()
}

/// Value at quantile `q` (nearest rank) of `values`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_bin_has_no_entropy() {
        assert_eq!(
            deviation_entropy(&[-0.009, 0.001, 0.009], 0.02).unwrap(),
            0.0
        );
    }

    #[test]
    fn eight_uniform_bins_give_three_bits() {
        let d: Vec<f64> = (0..80).map(|i| (i % 8) as f64 * 0.02 + 0.003).collect();
        assert!((deviation_entropy(&d, 0.02).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_bad_input() {
        assert_eq!(deviation_entropy(&[], 0.02), Err(MetricsError::Empty));
        assert_eq!(
            deviation_entropy(&[0.1], 0.0),
            Err(MetricsError::BinWidth(0.0))
        );
    }

    #[test]
    fn quantile_bins_are_balanced() {
        let v: Vec<f64> = (0..100).rev().map(f64::from).collect();
        let b = quantile_bins(&v, 4);
        for s in 0..4 {
            assert_eq!(b.iter().filter(|&&x| x == s).count(), 25);
        }
        assert_eq!(b[0], 3);
        assert_eq!(b[99], 0);
    }

    #[test]
    fn deterministic_coupling_carries_two_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        let mut h = vec![0; r.len()];
        h[1..].copy_from_slice(&r[..r.len() - 1]);
        let te = transfer_entropy(&r, &h, 1, 1).unwrap();
        assert!((te - 2.0).abs() < 0.01, "{te}");
    }

    #[test]
    fn independent_series_carry_almost_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        let h: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..4)).collect();
        let te = transfer_entropy(&r, &h, 1, 1).unwrap();
        assert!(te < 0.02, "{te}");
        let sur = shuffled_surrogates(&r, &h, 1, 1, 100, &mut rng).unwrap();
        assert!(
            te < percentile(&sur, 0.95),
            "{te} vs {}",
            percentile(&sur, 0.95)
        );
    }

    #[test]
    fn short_series_are_rejected() {
        let s = vec![0; 49];
        assert_eq!(
            transfer_entropy(&s, &s, 1, 1),
            Err(MetricsError::TooShort { found: 49, min: 50 })
        );
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.95), 95.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn entropy_is_permutation_invariant(mut d in prop::collection::vec(-0.5f64..0.5, 1..60), seed in any::<u64>()) {
            let a = deviation_entropy(&d, 0.02).unwrap();
            d.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = deviation_entropy(&d, 0.02).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn entropy_is_zero_only_for_one_bin(d in prop::collection::vec(-0.2f64..0.2, 1..40)) {
            let bins: std::collections::HashSet<i64> = d.iter().map(|x| (x / 0.02).round() as i64).collect();
            let h = deviation_entropy(&d, 0.02).unwrap();
            prop_assert_eq!(h == 0.0, bins.len() == 1);
        }
    }
}
