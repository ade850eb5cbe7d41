//! Synthetic cohorts under the research-capability model.
//!
//! A group's articles draw `y ~ Normal(μ, σ²)` from its current capability
//! `μ`, and the citation count is `max(0, round(exp(y)) - 1)`, so
//! `ln(1 + c)` tracks `y` apart from the mass piled up at zero. Articles not
//! owned by any group draw from the field baseline and carry no country.
//!
//! Capability trajectories are drawn per (journal, group) from their own
//! stream; articles are drawn per (journal, year). Both depend only on the
//! seed and coordinates, so generation order does not matter.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{CitationRecord, Cohort, CountryCode};
use crate::rng::{self, Domain};

/// How a group's capability `μ` evolves from year to year.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CapabilityMode {
    Static,
    /// `μ_y = μ_{y-1} + Normal(0, step_sd²)`, starting at the group's `mu`.
    RandomWalk {
        step_sd: f64,
    },
    /// `μ_y = mu + slope · (y - first_year)`.
    LinearDrift {
        slope: f64,
    },
    /// Each year independently `μ_y ~ Normal(mu, prior_sd²)`.
    IndependentResample {
        prior_sd: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub country: CountryCode,
    /// Fraction of each cohort authored by this group.
    pub share: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_journals: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub field_size_per_year: usize,
    /// Baseline for articles outside every group.
    pub field_mu: f64,
    pub field_sigma: f64,
    pub groups: Vec<GroupSpec>,
    pub capability_mode: CapabilityMode,
    /// Probability that a group article also lists one of the other groups'
    /// countries. Needs at least two groups to have any effect.
    #[serde(default)]
    pub collaboration_fraction: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Reads a spec from a `.json` file or, for any other extension, TOML.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ScenarioSpec = if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_journals == 0 || self.field_size_per_year == 0 {
            return bad("scenario needs at least one journal and one article per year".into());
        }
        if self.last_year < self.first_year {
            return bad(format!(
                "year range {}..={} is empty",
                self.first_year, self.last_year
            ));
        }
        if self.field_sigma.is_nan() || self.field_sigma <= 0.0 || !self.field_mu.is_finite() {
            return bad("field sigma must be positive and mu finite".into());
        }
        let mut total = 0.0;
        for g in &self.groups {
            if !(g.share > 0.0 && g.share <= 1.0) {
                return bad(format!("share of {} must be in (0, 1]", g.country));
            }
            if g.sigma.is_nan() || g.sigma <= 0.0 || !g.mu.is_finite() {
                return bad(format!("group {} needs sigma > 0 and finite mu", g.country));
            }
            total += g.share;
        }
        if total > 1.0 + 1e-12 {
            return bad(format!("group shares sum to {total} > 1"));
        }
        if !(0.0..=1.0).contains(&self.collaboration_fraction) {
            return bad("collaboration fraction must be in [0, 1]".into());
        }
        let step_ok = match self.capability_mode {
            CapabilityMode::Static => true,
            CapabilityMode::RandomWalk { step_sd: s }
            | CapabilityMode::IndependentResample { prior_sd: s } => s >= 0.0 && s.is_finite(),
            CapabilityMode::LinearDrift { slope } => slope.is_finite(),
        };
        if !step_ok {
            return bad("invalid capability mode parameter".into());
        }
        Ok(())
    }

    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year..=self.last_year
    }

    pub fn journal_id(&self, index: usize) -> String {
        let width = self.n_journals.to_string().len().max(2);
        format!("J{:0width$}", index + 1)
    }

    /// Articles per cohort for each group, then the remainder.
    pub fn group_sizes(&self) -> (Vec<usize>, usize) {
        let n = self.field_size_per_year;
        let sizes: Vec<usize> = self
            .groups
            .iter()
            .map(|g| (g.share * n as f64).round() as usize)
            .collect();
        let used: usize = sizes.iter().sum();
        (sizes, n.saturating_sub(used))
    }
}

fn discretise(y: f64) -> u64 {
    // `as` saturates for huge values and maps NaN to 0.
    (y.exp().round() as u64).saturating_sub(1)
}

/// Discretised lognormal counts: `max(0, round(exp(y)) - 1)`, `y ~ N(mu, sigma²)`.
pub fn sample_citations<R: Rng + ?Sized>(mu: f64, sigma: f64, n: usize, rng: &mut R) -> Vec<u64> {
    assert!(
        sigma >= 0.0 && sigma.is_finite(),
        "sigma must be finite and non-negative"
    );
    let normal = Normal::new(mu, sigma).expect("valid normal parameters");
    (0..n).map(|_| discretise(normal.sample(rng))).collect()
}

/// Capability `μ` of every group in every year of one journal.
/// Indexed `[group][year - first_year]`.
pub fn capability_paths(spec: &ScenarioSpec, journal: usize) -> Vec<Vec<f64>> {
    let n_years = (spec.last_year - spec.first_year + 1) as usize;
    spec.groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let mut rng = rng::stream(spec.seed, Domain::Trajectory, &[journal as u64, g as u64]);
            match spec.capability_mode {
                CapabilityMode::Static => vec![group.mu; n_years],
                CapabilityMode::LinearDrift { slope } => {
                    (0..n_years).map(|k| group.mu + slope * k as f64).collect()
                }
                CapabilityMode::IndependentResample { prior_sd } => {
                    let prior = Normal::new(group.mu, prior_sd).expect("validated");
                    (0..n_years).map(|_| prior.sample(&mut rng)).collect()
                }
                CapabilityMode::RandomWalk { step_sd } => {
                    let step = Normal::new(0.0, step_sd).expect("validated");
                    let mut mu = group.mu;
                    (0..n_years)
                        .map(|k| {
                            if k > 0 {
                                mu += step.sample(&mut rng);
                            }
                            mu
                        })
                        .collect()
                }
            }
        })
        .collect()
}

fn generate_cohort(spec: &ScenarioSpec, journal: usize, year: i32, paths: &[Vec<f64>]) -> Cohort {
    let journal_id = spec.journal_id(journal);
    let year_index = (year - spec.first_year) as usize;
    let coords = [journal as u64, year as u64];
    let mut rng = rng::stream(spec.seed, Domain::Cohort, &coords);
    let mut collab_rng = rng::stream(spec.seed, Domain::Collaboration, &coords);
    let (sizes, remainder) = spec.group_sizes();
    let mut records = Vec::with_capacity(spec.field_size_per_year);

    for (g, (group, &size)) in spec.groups.iter().zip(&sizes).enumerate() {
        let mu = paths[g][year_index];
        for c in sample_citations(mu, group.sigma, size, &mut rng) {
            let mut countries = vec![group.country];
            if spec.groups.len() > 1 && collab_rng.random::<f64>() < spec.collaboration_fraction {
                let other =
                    (g + 1 + collab_rng.random_range(0..spec.groups.len() - 1)) % spec.groups.len();
                countries.push(spec.groups[other].country);
            }
            records.push(CitationRecord::new(journal_id.clone(), year, c, countries));
        }
    }
    for c in sample_citations(spec.field_mu, spec.field_sigma, remainder, &mut rng) {
        records.push(CitationRecord::new(journal_id.clone(), year, c, []));
    }
    Cohort::new(records).expect("non-empty, single journal-year")
}

/// One cohort per (journal, year), journal-major.
pub fn generate(spec: &ScenarioSpec) -> Result<Vec<Cohort>> {
    generate_with(spec, Execution::default())
}

pub fn generate_with(spec: &ScenarioSpec, exec: Execution) -> Result<Vec<Cohort>> {
    spec.validate()?;
    let paths: Vec<Vec<Vec<f64>>> = (0..spec.n_journals)
        .map(|j| capability_paths(spec, j))
        .collect();
    let cells: Vec<(usize, i32)> = (0..spec.n_journals)
        .flat_map(|j| spec.years().map(move |y| (j, y)))
        .collect();
    Ok(exec.map(&cells, |&(j, y)| generate_cohort(spec, j, y, &paths[j])))
}
