//! Log-transformed citation statistics and the MNLCS ratio.

use crate::error::{Error, Result};
use crate::model::LogStats;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        iter.into_iter().for_each(|x| acc.add(x));
        acc
    }
}

impl LogStats {
    /// Two-pass mean and standard error over already-transformed values.
    /// The iterator is walked twice, so it must be cheap to clone.
    pub fn from_log_values<I>(values: I) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
        I::IntoIter: Clone,
    {
        let iter = values.into_iter();
        let (sum, n) = iter
            .clone()
            .fold((CompensatedSum::default(), 0usize), |(mut s, n), x| {
                s.add(x);
                (s, n + 1)
            });
        if n == 0 {
            return Err(Error::InsufficientData("empty sample".into()));
        }
        let mean = sum.value() / n as f64;
        let se = (n >= 2).then(|| {
            let ss: CompensatedSum = iter.map(|x| (x - mean) * (x - mean)).collect();
            (ss.value() / (n - 1) as f64 / n as f64).sqrt()
        });
        Ok(LogStats { n, mean, se })
    }
}

/// Mean and standard error of `ln(1 + c)`. `se` is `None` for one value.
pub fn log_stats(citations: &[u64]) -> Result<LogStats> {
    LogStats::from_log_values(citations.iter().map(|&c| (c as f64).ln_1p()))
}

/// Group mean over field mean of `ln(1 + c)`.
pub fn mnlcs(group: &LogStats, field: &LogStats) -> Result<f64> {
    if field.mean.is_nan() || field.mean <= 0.0 {
        return Err(Error::DegenerateField);
    }
    Ok(group.mean / field.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // ln 2 + ln 8 = ln 16, frozen from a 40-digit evaluation.
    const MEAN_1_7: f64 = 1.386_294_361_119_890_6;

    #[test]
    fn single_zero() {
        let s = log_stats(&[0]).unwrap();
        assert_eq!((s.n, s.mean, s.se), (1, 0.0, None));
    }

    #[test]
    fn pair_mean() {
        let s = log_stats(&[1, 7]).unwrap();
        assert!((s.mean - MEAN_1_7).abs() < 1e-15);
    }

    #[test]
    fn constant_sample_has_zero_se() {
        let s = log_stats(&[3, 3, 3]).unwrap();
        assert_eq!(s.se, Some(0.0));
        assert!((s.mean - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_is_insufficient() {
        assert!(matches!(log_stats(&[]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn ratio_examples() {
        let field = log_stats(&[0, 1, 3, 7]).unwrap();
        let group = log_stats(&[1, 7]).unwrap();
        // (ln2 + ln8)/2 over (ln2 + ln4 + ln8)/4 = 2 ln2 / 1.5 ln2
        assert!((mnlcs(&group, &field).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(mnlcs(&field, &field).unwrap(), 1.0);
        let zeros = log_stats(&[0, 0]).unwrap();
        assert_eq!(mnlcs(&zeros, &field).unwrap(), 0.0);
        assert!(matches!(mnlcs(&group, &zeros), Err(Error::DegenerateField)));
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let mut values = vec![1e16];
        values.extend(std::iter::repeat_n(1.0, 1000));
        let s: CompensatedSum = values.iter().copied().collect();
        assert_eq!(s.value(), 1e16 + 1000.0);
    }

    proptest! {
        #[test]
        fn self_ratio_is_one(counts in prop::collection::vec(0u64..10_000, 1..300)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let s = log_stats(&counts).unwrap();
            prop_assert!((mnlcs(&s, &s).unwrap() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn duplicating_records_keeps_ratio(
            field in prop::collection::vec(0u64..500, 2..100),
            take in 1usize..50,
        ) {
            prop_assume!(field.iter().any(|&c| c > 0));
            let group = &field[..take.min(field.len())];
            let doubled_field: Vec<u64> = field.iter().chain(field.iter()).copied().collect();
            let doubled_group: Vec<u64> = group.iter().chain(group.iter()).copied().collect();
            let a = mnlcs(&log_stats(group).unwrap(), &log_stats(&field).unwrap()).unwrap();
            let b = mnlcs(&log_stats(&doubled_group).unwrap(), &log_stats(&doubled_field).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn extra_citation_never_lowers_group_mean(
            group in prop::collection::vec(0u64..500, 1..50),
            which in 0usize..50,
        ) {
            let before = log_stats(&group).unwrap().mean;
            let mut bumped = group.clone();
            let i = which % bumped.len();
            bumped[i] += 1;
            prop_assert!(log_stats(&bumped).unwrap().mean >= before);
        }
    }
}
