//! Split-half resampling and the two-sample coverage simulation.
//!
//! The lag-0 estimate splits a cohort at random into two halves, builds the
//! interval on half A (field = all of A, group = the country's articles in
//! A) and checks whether half B's MNLCS lands inside it. Repeating this gives
//! the expected hit rate when nothing has changed, at half the sample size.
//!
//! Replicate `r` of cohort `(journal, year)` uses the RNG stream
//! `(seed, SplitHalf, [hash(journal), year, r])` and shuffles the cohort's
//! canonical record order, so results do not depend on input row order,
//! thread count or execution mode.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fieller::{self, t_quantile_cached, FiellerConfig, TQuantileSpec};
use crate::model::{Cohort, CountryCode, LogStats, Scheme};
use crate::rng::{self, Domain};

pub const DEFAULT_REPLICATES: usize = 1000;

/// Shuffles `0..n` and splits it into halves of `n / 2` and `n - n / 2`,
/// each returned in ascending order.
pub fn split_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut second = order.split_off(n / 2);
    order.sort_unstable();
    second.sort_unstable();
    (order, second)
}

fn replicate_stream(cohort: &Cohort, seed: u64, replicate: usize) -> rand_chacha::ChaCha8Rng {
    rng::stream(
        seed,
        Domain::SplitHalf,
        &[
            rng::stable_hash(cohort.journal_id()),
            cohort.year() as u64,
            replicate as u64,
        ],
    )
}

/// Random disjoint halves of a cohort (replicate 0 of [`lag0_coverage`]).
pub fn split_half(cohort: &Cohort, seed: u64) -> Result<(Cohort, Cohort)> {
    split_half_replicate(cohort, seed, 0)
}

pub fn split_half_replicate(
    cohort: &Cohort,
    seed: u64,
    replicate: usize,
) -> Result<(Cohort, Cohort)> {
    if cohort.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "cannot split a cohort of {} record(s)",
            cohort.len()
        )));
    }
    let (a, b) = split_indices(cohort.len(), &mut replicate_stream(cohort, seed, replicate));
    Ok((cohort.subset(&a)?, cohort.subset(&b)?))
}

/// Tally of split-half replicates for one (country, scheme).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lag0Coverage {
    pub country: CountryCode,
    pub scheme: Scheme,
    pub replicates: usize,
    /// Replicates where half B's value fell inside half A's interval.
    pub inside: usize,
    /// Replicates that produced a comparison.
    pub compared: usize,
    /// Half A had no bounded interval (too few articles, `h ≥ 1`, or an
    /// all-uncited field).
    pub excluded_base: usize,
    /// Half A was fine but half B had no usable value.
    pub excluded_later: usize,
}

impl Lag0Coverage {
    pub fn fraction(&self) -> Option<f64> {
        (self.compared > 0).then(|| self.inside as f64 / self.compared as f64)
    }

    pub fn excluded(&self) -> usize {
        self.excluded_base + self.excluded_later
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Outcome {
    Inside,
    Outside,
    ExcludedBase,
    ExcludedLater,
}

fn half_stats(cohort: &Cohort, idx: &[usize]) -> Option<LogStats> {
    let logs = cohort.log_citations();
    LogStats::from_log_values(idx.iter().map(|&i| logs[i])).ok()
}

/// Lag-0 coverage for several groups at once, all evaluated on the same
/// sequence of splits. Groups that never produce a comparison come back with
/// `compared == 0` rather than an error.
pub fn lag0_coverage_many(
    cohort: &Cohort,
    targets: &[(CountryCode, Scheme)],
    replicates: usize,
    seed: u64,
    config: &FiellerConfig,
    exec: Execution,
) -> Vec<Lag0Coverage> {
    let membership: Vec<Vec<bool>> = targets
        .iter()
        .map(|&(country, scheme)| {
            cohort
                .records()
                .iter()
                .map(|r| scheme.admits(&r.countries, country))
                .collect()
        })
        .collect();
    let logs = cohort.log_citations();

    let outcomes: Vec<Vec<Outcome>> = if cohort.len() < 2 {
        vec![vec![Outcome::ExcludedBase; targets.len()]; replicates]
    } else {
        exec.map_range(replicates, |r| {
            let (a, b) = split_indices(cohort.len(), &mut replicate_stream(cohort, seed, r));
            let (field_a, field_b) = (half_stats(cohort, &a), half_stats(cohort, &b));
            membership
                .iter()
                .map(|members| {
                    let Some(field_a) = field_a else {
                        return Outcome::ExcludedBase;
                    };
                    let group_a = a.iter().filter(|&&i| members[i]).map(|&i| logs[i]);
                    let base = fieller::estimate(group_a, &field_a, config);
                    let Some(interval) = base.interval else {
                        return Outcome::ExcludedBase;
                    };
                    let later = field_b.and_then(|field_b| {
                        let group_b = b.iter().filter(|&&i| members[i]).map(|&i| logs[i]);
                        fieller::estimate(group_b, &field_b, config).usable_value()
                    });
                    match later {
                        None => Outcome::ExcludedLater,
                        Some(v) if interval.contains(v) => Outcome::Inside,
                        Some(_) => Outcome::Outside,
                    }
                })
                .collect()
        })
    };

    targets
        .iter()
        .enumerate()
        .map(|(t, &(country, scheme))| {
            let mut tally = Lag0Coverage {
                country,
                scheme,
                replicates,
                inside: 0,
                compared: 0,
                excluded_base: 0,
                excluded_later: 0,
            };
            for rep in &outcomes {
                match rep[t] {
                    Outcome::Inside => {
                        tally.inside += 1;
                        tally.compared += 1;
                    }
                    Outcome::Outside => tally.compared += 1,
                    Outcome::ExcludedBase => tally.excluded_base += 1,
                    Outcome::ExcludedLater => tally.excluded_later += 1,
                }
            }
            tally
        })
        .collect()
}

/// Fraction of split-half replicates in which half B's MNLCS falls inside
/// half A's interval. Errors with `NoValidReplicates` when every replicate
/// was excluded.
pub fn lag0_coverage(
    cohort: &Cohort,
    country: CountryCode,
    scheme: Scheme,
    replicates: usize,
    seed: u64,
    config: &FiellerConfig,
    exec: Execution,
) -> Result<Lag0Coverage> {
    let tally = lag0_coverage_many(cohort, &[(country, scheme)], replicates, seed, config, exec)
        .pop()
        .expect("one target");
    if tally.compared == 0 {
        return Err(Error::NoValidReplicates {
            replicates,
            excluded: tally.excluded(),
        });
    }
    Ok(tally)
}

/// Two samples from `Normal(mu0, sigma0²)`: how often does the second
/// sample's mean fall inside the first sample's t-interval for the mean?
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSimSpec {
    pub mu0: f64,
    pub sigma0: f64,
    pub n_first: usize,
    pub n_second: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Upper-tail probability per side of the first-sample interval.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.025
}

impl CoverageSimSpec {
    pub fn new(n_first: usize, n_second: usize, replicates: usize, seed: u64) -> Self {
        CoverageSimSpec {
            mu0: 0.0,
            sigma0: 1.0,
            n_first,
            n_second,
            replicates,
            seed,
            alpha: default_alpha(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_first < 2 || self.n_second < 1 {
            return Err(Error::InsufficientData(
                "first sample needs n >= 2 and second sample n >= 1".into(),
            ));
        }
        if self.sigma0.is_nan() || self.sigma0 <= 0.0 || !self.mu0.is_finite() {
            return Err(Error::Domain(
                "sigma0 must be positive and mu0 finite".into(),
            ));
        }
        if self.replicates < 100 {
            return Err(Error::Domain(format!(
                "at least 100 replicates required, got {}",
                self.replicates
            )));
        }
        TQuantileSpec::new(1.0, self.alpha).map(|_| ())
    }
}

pub fn coverage_probability_sim(spec: &CoverageSimSpec, exec: Execution) -> Result<f64> {
    spec.validate()?;
    let normal = Normal::new(spec.mu0, spec.sigma0).expect("validated");
    let t = t_quantile_cached(TQuantileSpec::new((spec.n_first - 1) as f64, spec.alpha)?);
    let hits = exec.count(spec.replicates, |r| {
        let mut rng = rng::stream(spec.seed, Domain::CoverageSim, &[r as u64]);
        let first: Vec<f64> = (0..spec.n_first).map(|_| normal.sample(&mut rng)).collect();
        let stats = LogStats::from_log_values(first.iter().copied()).expect("n_first >= 2");
        let half_width = t * stats.se.expect("n_first >= 2");
        let second: crate::indicator::CompensatedSum = (0..spec.n_second)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let mean = second.value() / spec.n_second as f64;
        (stats.mean - half_width..=stats.mean + half_width).contains(&mean)
    });
    Ok(hits as f64 / spec.replicates as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CitationRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cc(s: &str) -> CountryCode {
        s.parse().unwrap()
    }

    fn cohort(n: usize) -> Cohort {
        Cohort::new(
            (0..n)
                .map(|i| {
                    let countries = if i % 3 == 0 { vec![cc("US")] } else { vec![] };
                    CitationRecord::new("J", 2000, (i * 7 % 11) as u64, countries)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_sizes() {
        let (a, b) = split_half(&cohort(10), 1).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let (a, b) = split_half(&cohort(11), 1).unwrap();
        assert_eq!(a.len() + b.len(), 11);
        assert!(a.len().abs_diff(b.len()) == 1);
        assert!(matches!(
            split_half(&cohort(1), 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, b) = split_indices(31, &mut rng);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..31).collect::<Vec<_>>());
        let c = cohort(40);
        assert_eq!(split_half(&c, 9).unwrap(), split_half(&c, 9).unwrap());
        assert_ne!(split_half(&c, 9).unwrap(), split_half(&c, 10).unwrap());
    }

    #[test]
    fn lag0_invariant_to_record_order() {
        let base = cohort(300);
        let mut reversed = base.records().to_vec();
        reversed.reverse();
        let shuffled = Cohort::new(reversed).unwrap();
        let cfg = FiellerConfig::default();
        let a = lag0_coverage(
            &base,
            cc("US"),
            Scheme::Inclusive,
            200,
            5,
            &cfg,
            Execution::Sequential,
        )
        .unwrap();
        let b = lag0_coverage(
            &shuffled,
            cc("US"),
            Scheme::Inclusive,
            200,
            5,
            &cfg,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(a, b);
        let f = a.fraction().unwrap();
        assert!((0.0..=1.0).contains(&f));
        assert_eq!(a.compared + a.excluded(), 200);
    }

    #[test]
    fn minimum_size_group_is_mostly_excluded() {
        // 10 US articles among 40: a half rarely holds 5 of them on both sides.
        let records: Vec<_> = (0..40)
            .map(|i| {
                let countries = if i < 10 { vec![cc("US")] } else { vec![] };
                CitationRecord::new("J", 2001, (i % 9) as u64, countries)
            })
            .collect();
        let c = Cohort::new(records).unwrap();
        let cfg = FiellerConfig {
            min_group_n: 5,
            ..Default::default()
        };
        let tally = lag0_coverage_many(
            &c,
            &[(cc("US"), Scheme::Inclusive)],
            300,
            2,
            &cfg,
            Execution::Sequential,
        )[0];
        assert!(tally.excluded() > tally.compared, "{tally:?}");
        let strict = FiellerConfig {
            min_group_n: 6,
            ..cfg
        };
        let none = lag0_coverage(
            &c,
            cc("US"),
            Scheme::Inclusive,
            300,
            2,
            &strict,
            Execution::Sequential,
        );
        assert!(none.is_ok() || matches!(none, Err(Error::NoValidReplicates { .. })));
        let absent = lag0_coverage(
            &c,
            cc("JP"),
            Scheme::Inclusive,
            100,
            2,
            &cfg,
            Execution::Sequential,
        );
        assert!(matches!(
            absent,
            Err(Error::NoValidReplicates {
                replicates: 100,
                excluded: 100
            })
        ));
    }

    #[test]
    fn coverage_sim_validation() {
        assert!(coverage_probability_sim(
            &CoverageSimSpec::new(1, 5, 100, 0),
            Execution::Sequential
        )
        .is_err());
        assert!(coverage_probability_sim(
            &CoverageSimSpec::new(5, 0, 100, 0),
            Execution::Sequential
        )
        .is_err());
        assert!(coverage_probability_sim(
            &CoverageSimSpec::new(5, 5, 99, 0),
            Execution::Sequential
        )
        .is_err());
        let spec = CoverageSimSpec {
            sigma0: 0.0,
            ..CoverageSimSpec::new(5, 5, 100, 0)
        };
        assert!(coverage_probability_sim(&spec, Execution::Sequential).is_err());
    }

    #[test]
    fn coverage_sim_modes_agree_and_shrinks_with_first_sample() {
        let run = |n1, exec| {
            coverage_probability_sim(&CoverageSimSpec::new(n1, 1, 2000, 17), exec).unwrap()
        };
        assert_eq!(run(50, Execution::Sequential), run(50, Execution::Parallel));
        let fractions: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&n| run(n, Execution::default()))
            .collect();
        assert!(
            fractions.windows(2).all(|w| w[1] <= w[0] + 0.02),
            "{fractions:?}"
        );
        assert!(fractions[2] < 0.15);
    }
}
