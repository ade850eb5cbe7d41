//! Year-offset stability: how often a later MNLCS value lands inside an
//! earlier year's interval for the same country, journal and scheme.
//!
//! Cells (one estimate per journal, year, country and scheme) are computed
//! in parallel; curves and series are sequential reductions over them.
//! Every comparison is the later year's point value against the base year's
//! interval, within one journal.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{lag0_coverage_many, Lag0Coverage};
use crate::counting::select_group;
use crate::exec::Execution;
use crate::fieller::{self, FiellerConfig};
use crate::model::{Cohort, CountryCode, LogStats, MnlcsEstimate, Scheme, Validity};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub journal_id: String,
    pub year: i32,
    pub country: CountryCode,
    pub scheme: Scheme,
    pub estimate: MnlcsEstimate,
}

fn field_stats(cohort: &Cohort) -> LogStats {
    LogStats::from_log_values(cohort.log_citations().iter().copied())
        .expect("cohorts are non-empty")
}

/// Estimates for one cohort, country-major then scheme.
pub fn cohort_cells(
    cohort: &Cohort,
    countries: &[CountryCode],
    schemes: &[Scheme],
    config: &FiellerConfig,
) -> Vec<CellResult> {
    let field = field_stats(cohort);
    let mut out = Vec::with_capacity(countries.len() * schemes.len());
    for &country in countries {
        for &scheme in schemes {
            let selection = select_group(cohort, country, scheme);
            let estimate = fieller::estimate(selection.log_citations(cohort), &field, config);
            out.push(CellResult {
                journal_id: cohort.journal_id().to_string(),
                year: cohort.year(),
                country,
                scheme,
                estimate,
            });
        }
    }
    out
}

/// All cells, ordered by (journal, year, country, scheme). Every combination
/// is emitted, including those without enough data.
pub fn compute_cells(
    cohorts: &[Cohort],
    countries: &[CountryCode],
    schemes: &[Scheme],
    config: &FiellerConfig,
    exec: Execution,
) -> Vec<CellResult> {
    let mut ordered: Vec<&Cohort> = cohorts.iter().collect();
    ordered.sort_by(|a, b| (a.journal_id(), a.year()).cmp(&(b.journal_id(), b.year())));
    let mut countries = countries.to_vec();
    countries.sort_unstable();
    countries.dedup();
    let mut schemes = schemes.to_vec();
    schemes.sort_unstable();
    schemes.dedup();
    exec.map(&ordered, |c| cohort_cells(c, &countries, &schemes, config))
        .into_iter()
        .flatten()
        .collect()
}

/// `(base, later)` year pairs `offset` years apart inside `years`.
pub fn enumerate_pairs(years: RangeInclusive<i32>, offset: u32) -> Vec<(i32, i32)> {
    if offset == 0 {
        return Vec::new();
    }
    let offset = offset as i32;
    let (first, last) = (*years.start(), *years.end());
    (first..=last)
        .filter_map(|base| {
            let later = base.checked_add(offset)?;
            (later <= last).then_some((base, later))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub offset_years: u32,
    pub inside_fraction: f64,
    /// Comparisons behind the point; for the simulated offset-0 point, the
    /// number of journal-years averaged.
    pub n_comparisons: usize,
    pub inside: usize,
    /// Offset 0 comes from split-half simulation, not observed pairs.
    pub simulated: bool,
    pub excluded_base: usize,
    pub excluded_later: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub country: CountryCode,
    pub scheme: Scheme,
    pub points: Vec<CoveragePoint>,
    /// Offsets with no valid pair; their points are omitted.
    pub empty_offsets: Vec<u32>,
}

/// Offset-0 level: mean of per-journal-year split-half fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lag0Level {
    pub mean_fraction: f64,
    pub journal_years: usize,
    pub excluded_journal_years: usize,
}

/// Averages the split-half tallies of one (country, scheme) over
/// journal-years; journal-years without a single comparison are skipped.
pub fn lag0_level<'a>(tallies: impl IntoIterator<Item = &'a Lag0Coverage>) -> Option<Lag0Level> {
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for tally in tallies {
        match tally.fraction() {
            Some(f) => {
                sum += f;
                used += 1;
            }
            None => skipped += 1,
        }
    }
    (used > 0).then(|| Lag0Level {
        mean_fraction: sum / used as f64,
        journal_years: used,
        excluded_journal_years: skipped,
    })
}

/// Offset curve for the cells of one (country, scheme).
///
/// A pair counts when the base cell has a bounded interval and the later
/// cell has a usable value; membership is closed at the endpoints.
pub fn coverage_curve(
    cells: &[CellResult],
    years: RangeInclusive<i32>,
    max_offset: u32,
    lag0: Option<Lag0Level>,
) -> CoverageCurve {
    let first = cells
        .first()
        .expect("coverage curve needs at least one cell");
    let (country, scheme) = (first.country, first.scheme);
    debug_assert!(cells
        .iter()
        .all(|c| c.country == country && c.scheme == scheme));

    let by_key: BTreeMap<(&str, i32), &MnlcsEstimate> = cells
        .iter()
        .map(|c| ((c.journal_id.as_str(), c.year), &c.estimate))
        .collect();
    let journals: BTreeSet<&str> = cells.iter().map(|c| c.journal_id.as_str()).collect();

    let mut points = Vec::new();
    let mut empty_offsets = Vec::new();
    if let Some(level) = lag0 {
        points.push(CoveragePoint {
            offset_years: 0,
            inside_fraction: level.mean_fraction,
            n_comparisons: level.journal_years,
            inside: 0,
            simulated: true,
            excluded_base: level.excluded_journal_years,
            excluded_later: 0,
        });
    }
    for offset in 1..=max_offset {
        let pairs = enumerate_pairs(years.clone(), offset);
        let (mut inside, mut compared, mut excluded_base, mut excluded_later) = (0, 0, 0, 0);
        for journal in &journals {
            for &(base, later) in &pairs {
                let Some(base) = by_key.get(&(*journal, base)).filter(|e| e.is_ok()) else {
                    excluded_base += 1;
                    continue;
                };
                let Some(value) = by_key
                    .get(&(*journal, later))
                    .and_then(|e| e.usable_value())
                else {
                    excluded_later += 1;
                    continue;
                };
                compared += 1;
                if base.contains(value) {
                    inside += 1;
                }
            }
        }
        if compared == 0 {
            empty_offsets.push(offset);
            continue;
        }
        points.push(CoveragePoint {
            offset_years: offset,
            inside_fraction: inside as f64 / compared as f64,
            n_comparisons: compared,
            inside,
            simulated: false,
            excluded_base,
            excluded_later,
        });
    }
    CoverageCurve {
        country,
        scheme,
        points,
        empty_offsets,
    }
}

impl CoverageCurve {
    /// Observed (non-simulated) points.
    pub fn observed(&self) -> impl Iterator<Item = &CoveragePoint> {
        self.points.iter().filter(|p| !p.simulated)
    }

    pub fn lag0(&self) -> Option<&CoveragePoint> {
        self.points.iter().find(|p| p.simulated)
    }

    pub fn total_comparisons(&self) -> usize {
        self.observed().map(|p| p.n_comparisons).sum()
    }

    /// Comparison-weighted mean of the observed points.
    pub fn weighted_level(&self) -> Option<f64> {
        let n = self.total_comparisons();
        (n > 0).then(|| self.observed().map(|p| p.inside).sum::<usize>() as f64 / n as f64)
    }

    /// Comparison-weighted least-squares line `(intercept, slope)` through
    /// the observed points, in fraction per year of offset.
    pub fn weighted_trend(&self) -> Option<(f64, f64)> {
        let pts: Vec<(f64, f64, f64)> = self
            .observed()
            .map(|p| {
                (
                    p.offset_years as f64,
                    p.inside_fraction,
                    p.n_comparisons as f64,
                )
            })
            .collect();
        let w: f64 = pts.iter().map(|p| p.2).sum();
        let mx = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / w;
        let my = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / w;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        if pts.len() < 2 || sxx == 0.0 {
            return None;
        }
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        Some((my - slope * mx, slope))
    }

    /// Spearman rank correlation between offset and inside fraction over
    /// the observed points.
    pub fn offset_spearman(&self) -> Option<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .observed()
            .map(|p| (p.offset_years as f64, p.inside_fraction))
            .unzip();
        spearman(&x, &y)
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman correlation with average ranks for ties. `None` for fewer than
/// two points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub year: i32,
    /// `None` marks a gap (too few articles or an all-uncited field).
    pub value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub validity: Validity,
}

/// Year-ordered values and reported (clamped) bounds for one
/// (country, journal, scheme).
pub fn series_report(cells: &[CellResult]) -> Vec<SeriesPoint> {
    let mut points: Vec<SeriesPoint> = cells
        .iter()
        .map(|c| SeriesPoint {
            year: c.year,
            value: c.estimate.usable_value(),
            ci_low: c.estimate.ci_low(),
            ci_high: c.estimate.ci_high(),
            validity: c.estimate.validity,
        })
        .collect();
    points.sort_by_key(|p| p.year);
    points
}

/// Split-half tallies for every cohort and (country, scheme), in the same
/// cohort order as [`compute_cells`].
pub fn lag0_table(
    cohorts: &[Cohort],
    countries: &[CountryCode],
    schemes: &[Scheme],
    replicates: usize,
    seed: u64,
    config: &FiellerConfig,
    exec: Execution,
) -> Vec<(String, i32, Lag0Coverage)> {
    let mut ordered: Vec<&Cohort> = cohorts.iter().collect();
    ordered.sort_by(|a, b| (a.journal_id(), a.year()).cmp(&(b.journal_id(), b.year())));
    let mut targets: Vec<(CountryCode, Scheme)> = countries
        .iter()
        .flat_map(|&c| schemes.iter().map(move |&s| (c, s)))
        .collect();
    targets.sort_unstable();
    targets.dedup();
    // Parallel over cohorts; replicates inside a cohort run sequentially.
    exec.map(&ordered, |cohort| {
        lag0_coverage_many(
            cohort,
            &targets,
            replicates,
            seed,
            config,
            Execution::Sequential,
        )
        .into_iter()
        .map(|t| (cohort.journal_id().to_string(), cohort.year(), t))
        .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}
