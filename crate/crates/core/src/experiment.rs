//! The full stability experiment: load or generate cohorts, compute every
//! cell, the split-half baseline, offset curves and series, and write them
//! with a manifest that pins the configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{self, Lag0Coverage, DEFAULT_REPLICATES};
use crate::counting::top_countries;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fieller::FiellerConfig;
use crate::io::{self, ExclusionRow, IngestOptions, SeriesTable};
use crate::model::{Cohort, CountryCode, Scheme};
use crate::stability::{
    compute_cells, coverage_curve, lag0_level, lag0_table, series_report, CellResult, CoverageCurve,
};
use crate::synth::{self, ScenarioSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSource {
    File {
        path: PathBuf,
        #[serde(default)]
        journals: Option<Vec<String>>,
        #[serde(default)]
        max_bad_rows: usize,
    },
    Scenario {
        scenario: ScenarioSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub input: InputSource,
    /// Countries to analyse; empty means the `top_k` largest by inclusive count.
    #[serde(default)]
    pub countries: Vec<CountryCode>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    /// Inclusive year range; defaults to the span of the data. For file
    /// input, rows outside it are dropped at ingestion.
    #[serde(default)]
    pub first_year: Option<i32>,
    #[serde(default)]
    pub last_year: Option<i32>,
    /// Largest year offset; defaults to the full span.
    #[serde(default)]
    pub max_offset: Option<u32>,
    /// Seed for split-half resampling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fieller: FiellerConfig,
    /// Split-half replicates per journal-year; 0 skips the offset-0 point.
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
}

fn default_top_k() -> usize {
    10
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

impl ExperimentConfig {
    pub fn from_source(input: InputSource) -> Self {
        ExperimentConfig {
            input,
            countries: Vec::new(),
            top_k: default_top_k(),
            schemes: default_schemes(),
            first_year: None,
            last_year: None,
            max_offset: None,
            seed: 0,
            fieller: FiellerConfig::default(),
            bootstrap_replicates: default_replicates(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fieller.validate()?;
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if self.countries.is_empty() && self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if let (Some(a), Some(b)) = (self.first_year, self.last_year) {
            if b < a {
                return Err(Error::Config(format!("year range {a}..={b} is empty")));
            }
        }
        if let InputSource::Scenario { scenario } = &self.input {
            scenario.validate()?;
        }
        Ok(())
    }

    /// Replaces both the resampling seed and, for synthetic input, the
    /// generation seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        if let InputSource::Scenario { scenario } = &mut self.input {
            scenario.seed = seed;
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(&json))
    }

    /// Parses a config from JSON or TOML text. JSON may also be a run
    /// manifest, whose embedded config is used.
    pub fn from_str_format(text: &str, format: ConfigFormat) -> Result<Self> {
        match format {
            ConfigFormat::Json => {
                let value: serde_json::Value = serde_json::from_str(text)?;
                let inner = match value.get("config") {
                    Some(inner) if value.get("config_hash").is_some() => inner.clone(),
                    _ => value,
                };
                Ok(serde_json::from_value(inner)?)
            }
            ConfigFormat::Toml => Ok(toml::from_str(text)?),
        }
    }

    /// Reads a config file; `.json` files are JSON, anything else TOML.
    /// A relative input path is taken relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        };
        let mut config = Self::from_str_format(&text, format)?;
        if let InputSource::File { path: input, .. } = &mut config.input {
            if input.is_relative() {
                if let Some(dir) = path.parent() {
                    *input = dir.join(&*input);
                }
            }
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigFormat {
    Json,
    Toml,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Cohorts plus what was dropped getting them.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub cohorts: Vec<Cohort>,
    pub records: usize,
    pub row_errors: Vec<io::RowError>,
}

pub fn load_cohorts(config: &ExperimentConfig, exec: Execution) -> Result<LoadedData> {
    match &config.input {
        InputSource::File {
            path,
            journals,
            max_bad_rows,
        } => {
            let years = match (config.first_year, config.last_year) {
                (None, None) => None,
                (a, b) => Some(a.unwrap_or(i32::MIN)..=b.unwrap_or(i32::MAX)),
            };
            let options = IngestOptions {
                journals: journals.as_ref().map(|j| j.iter().cloned().collect()),
                years,
                max_bad_rows: *max_bad_rows,
            };
            let report = io::ingest(path, &options)?;
            Ok(LoadedData {
                cohorts: report.cohorts,
                records: report.records,
                row_errors: report.row_errors,
            })
        }
        InputSource::Scenario { scenario } => {
            let cohorts = synth::generate_with(scenario, exec)?;
            let records = cohorts.iter().map(Cohort::len).sum();
            Ok(LoadedData {
                cohorts,
                records,
                row_errors: Vec::new(),
            })
        }
    }
}

/// Countries in figure order: as configured, or the largest by inclusive count.
pub fn resolve_countries(config: &ExperimentConfig, cohorts: &[Cohort]) -> Vec<CountryCode> {
    if !config.countries.is_empty() {
        return config.countries.clone();
    }
    top_countries(cohorts, config.top_k).countries()
}

fn year_span(config: &ExperimentConfig, cohorts: &[Cohort]) -> Option<(i32, i32)> {
    let data_first = cohorts.iter().map(Cohort::year).min();
    let data_last = cohorts.iter().map(Cohort::year).max();
    Some((
        config.first_year.or(data_first)?,
        config.last_year.or(data_last)?,
    ))
}

/// Everything the experiment computes, in deterministic order.
#[derive(Clone, Debug)]
pub struct StabilityResults {
    pub countries: Vec<CountryCode>,
    pub schemes: Vec<Scheme>,
    pub first_year: i32,
    pub last_year: i32,
    pub cells: Vec<CellResult>,
    pub lag0: Vec<(String, i32, Lag0Coverage)>,
    pub curves: Vec<CoverageCurve>,
    pub series: SeriesTable,
    pub exclusions: Vec<ExclusionRow>,
}

pub fn analyse(
    config: &ExperimentConfig,
    cohorts: &[Cohort],
    exec: Execution,
) -> Result<StabilityResults> {
    config.validate()?;
    let countries = resolve_countries(config, cohorts);
    let mut schemes = config.schemes.clone();
    schemes.sort_unstable();
    schemes.dedup();
    let (first_year, last_year) = year_span(config, cohorts)
        .ok_or_else(|| Error::InsufficientData("no cohorts to analyse".into()))?;
    let max_offset = config
        .max_offset
        .unwrap_or((last_year - first_year).max(0) as u32);

    let cells = compute_cells(cohorts, &countries, &schemes, &config.fieller, exec);
    let lag0 = if config.bootstrap_replicates > 0 {
        lag0_table(
            cohorts,
            &countries,
            &schemes,
            config.bootstrap_replicates,
            config.seed,
            &config.fieller,
            exec,
        )
    } else {
        Vec::new()
    };

    let mut by_group: BTreeMap<(CountryCode, Scheme), Vec<CellResult>> = BTreeMap::new();
    for cell in &cells {
        by_group
            .entry((cell.country, cell.scheme))
            .or_default()
            .push(cell.clone());
    }
    let mut lag0_by_group: BTreeMap<(CountryCode, Scheme), Vec<&Lag0Coverage>> = BTreeMap::new();
    for (_, _, tally) in &lag0 {
        lag0_by_group
            .entry((tally.country, tally.scheme))
            .or_default()
            .push(tally);
    }

    let mut curves = Vec::new();
    let mut exclusions = Vec::new();
    for &scheme in &schemes {
        for &country in &countries {
            let Some(group_cells) = by_group.get(&(country, scheme)) else {
                continue;
            };
            let tallies = lag0_by_group.get(&(country, scheme));
            let level = tallies.and_then(|t| lag0_level(t.iter().copied()));
            let curve = coverage_curve(group_cells, first_year..=last_year, max_offset, level);
            if let Some(tallies) = tallies {
                let base: usize = tallies.iter().map(|t| t.excluded_base).sum();
                let later: usize = tallies.iter().map(|t| t.excluded_later).sum();
                let empty = tallies.iter().filter(|t| t.compared == 0).count();
                for (reason, count) in [
                    ("split_half_base_invalid", base),
                    ("split_half_later_missing", later),
                    ("journal_year_without_comparison", empty),
                ] {
                    exclusions.push(ExclusionRow {
                        country,
                        scheme,
                        offset_years: 0,
                        reason,
                        count,
                    });
                }
            }
            for p in curve.observed() {
                exclusions.push(ExclusionRow {
                    country,
                    scheme,
                    offset_years: p.offset_years,
                    reason: "base_interval_invalid",
                    count: p.excluded_base,
                });
                exclusions.push(ExclusionRow {
                    country,
                    scheme,
                    offset_years: p.offset_years,
                    reason: "later_value_missing",
                    count: p.excluded_later,
                });
            }
            for &offset in &curve.empty_offsets {
                exclusions.push(ExclusionRow {
                    country,
                    scheme,
                    offset_years: offset,
                    reason: "no_valid_pairs",
                    count: 0,
                });
            }
            curves.push(curve);
        }
    }

    let mut per_series: BTreeMap<(String, CountryCode, Scheme), Vec<CellResult>> = BTreeMap::new();
    for cell in &cells {
        per_series
            .entry((cell.journal_id.clone(), cell.country, cell.scheme))
            .or_default()
            .push(cell.clone());
    }
    let series = per_series
        .into_iter()
        .map(|(key, cells)| (key, series_report(&cells)))
        .collect();

    Ok(StabilityResults {
        countries,
        schemes,
        first_year,
        last_year,
        cells,
        lag0,
        curves,
        series,
        exclusions,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub countries: Vec<CountryCode>,
    pub first_year: i32,
    pub last_year: i32,
    pub cohorts: usize,
    pub records: usize,
    /// File name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_file(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    hashes: &mut BTreeMap<String, String>,
) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    hashes.insert(name.to_string(), hex(&Sha256::digest(bytes)));
    Ok(())
}

fn render<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Writes every table plus `manifest.json` into `out_dir`.
pub fn write_results(
    out_dir: &Path,
    config: &ExperimentConfig,
    data: &LoadedData,
    results: &StabilityResults,
) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outputs = BTreeMap::new();
    let tables: Vec<(&str, Vec<u8>)> = vec![
        ("cells.csv", render(|w| io::write_cells(w, &results.cells))?),
        (
            "curves.csv",
            render(|w| io::write_curves(w, &results.curves))?,
        ),
        (
            "series.csv",
            render(|w| io::write_series(w, &results.series))?,
        ),
        (
            "exclusions.csv",
            render(|w| io::write_exclusions(w, &results.exclusions))?,
        ),
        ("lag0.csv", render(|w| io::write_lag0(w, &results.lag0))?),
    ];
    for (name, bytes) in &tables {
        write_file(out_dir, name, bytes, &mut outputs)?;
    }
    for (scheme, name) in [
        (Scheme::Exclusive, "fig1_exclusive_curves.csv"),
        (Scheme::Inclusive, "fig2_inclusive_curves.csv"),
    ] {
        if results.schemes.contains(&scheme) {
            let bytes = render(|w| {
                io::write_figure_curves(w, &results.curves, scheme, &results.countries)
            })?;
            write_file(out_dir, name, &bytes, &mut outputs)?;
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        seed: config.seed,
        config: config.clone(),
        countries: results.countries.clone(),
        first_year: results.first_year,
        last_year: results.last_year,
        cohorts: data.cohorts.len(),
        records: data.records,
        outputs,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Split-half coverage for a single journal-year cell. Failures carry the
/// cell's coordinates.
#[allow(clippy::too_many_arguments)]
pub fn cell_lag0(
    cohorts: &[Cohort],
    journal: &str,
    year: i32,
    country: CountryCode,
    scheme: Scheme,
    replicates: usize,
    seed: u64,
    config: &FiellerConfig,
    exec: Execution,
) -> Result<Lag0Coverage> {
    let wrap = |source: Error| Error::Cell {
        journal: journal.to_string(),
        year,
        country: country.to_string(),
        scheme,
        source: Box::new(source),
    };
    let cohort = cohorts
        .iter()
        .find(|c| c.journal_id() == journal && c.year() == year)
        .ok_or_else(|| {
            wrap(Error::InsufficientData(
                "no records for this journal and year".into(),
            ))
        })?;
    bootstrap::lag0_coverage(cohort, country, scheme, replicates, seed, config, exec).map_err(wrap)
}

/// Load, analyse and write. Output bytes depend only on the config.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    exec: Execution,
) -> Result<Manifest> {
    config.validate()?;
    let data = load_cohorts(config, exec)?;
    let results = analyse(config, &data.cohorts, exec)?;
    write_results(out_dir, config, &data, &results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{CapabilityMode, GroupSpec};

    fn small_config() -> ExperimentConfig {
        let scenario = ScenarioSpec {
            n_journals: 3,
            first_year: 2000,
            last_year: 2005,
            field_size_per_year: 120,
            field_mu: 1.0,
            field_sigma: 1.0,
            groups: vec![
                GroupSpec {
                    country: "US".parse().unwrap(),
                    share: 0.3,
                    mu: 1.1,
                    sigma: 1.0,
                },
                GroupSpec {
                    country: "JP".parse().unwrap(),
                    share: 0.15,
                    mu: 0.9,
                    sigma: 1.0,
                },
            ],
            capability_mode: CapabilityMode::Static,
            collaboration_fraction: 0.1,
            seed: 1,
        };
        ExperimentConfig {
            bootstrap_replicates: 50,
            ..ExperimentConfig::from_source(InputSource::Scenario { scenario })
        }
    }

    #[test]
    fn analyse_shapes() {
        let config = small_config();
        let data = load_cohorts(&config, Execution::default()).unwrap();
        let r = analyse(&config, &data.cohorts, Execution::default()).unwrap();
        assert_eq!(r.countries.len(), 2);
        assert_eq!(r.cells.len(), 3 * 6 * 2 * 2);
        assert_eq!(r.curves.len(), 4);
        assert_eq!(r.series.len(), 3 * 2 * 2);
        for curve in &r.curves {
            assert!(curve
                .points
                .windows(2)
                .all(|w| w[0].offset_years < w[1].offset_years));
            assert!(curve.points.iter().all(|p| p.n_comparisons > 0));
            assert!(curve
                .points
                .iter()
                .all(|p| (0.0..=1.0).contains(&p.inside_fraction)));
        }
    }

    #[test]
    fn config_hash_and_json_roundtrip() {
        let config = small_config();
        let json = serde_json::to_string(&config).unwrap();
        let back = ExperimentConfig::from_str_format(&json, ConfigFormat::Json).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.hash(), config.hash());
        let text = toml::to_string(&config).unwrap();
        let back = ExperimentConfig::from_str_format(&text, ConfigFormat::Toml).unwrap();
        assert_eq!(back, config);
        let mut other = config.clone();
        other.set_seed(9);
        assert_ne!(other.hash(), config.hash());
    }

    #[test]
    fn toml_defaults() {
        let text = r#"
            seed = 7
            [input]
            kind = "file"
            path = "data.csv"
        "#;
        let c = ExperimentConfig::from_str_format(text, ConfigFormat::Toml).unwrap();
        assert_eq!(c.top_k, 10);
        assert_eq!(c.schemes, Scheme::ALL.to_vec());
        assert_eq!(c.bootstrap_replicates, 1000);
        assert_eq!(c.fieller, FiellerConfig::default());
        assert!(c.countries.is_empty());
    }

    #[test]
    fn cell_errors_carry_coordinates() {
        let config = small_config();
        let cohorts = load_cohorts(&config, Execution::Sequential)
            .unwrap()
            .cohorts;
        let zz: CountryCode = "ZZ".parse().unwrap();
        let err = cell_lag0(
            &cohorts,
            "J01",
            2001,
            zz,
            Scheme::Exclusive,
            20,
            0,
            &config.fieller,
            Execution::Sequential,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "NoValidReplicates");
        let msg = err.to_string();
        assert!(
            msg.contains("J01") && msg.contains("2001") && msg.contains("ZZ"),
            "{msg}"
        );
        let err = cell_lag0(
            &cohorts,
            "J99",
            2001,
            zz,
            Scheme::Exclusive,
            20,
            0,
            &config.fieller,
            Execution::Sequential,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "InsufficientData");
    }

    #[test]
    fn invalid_config() {
        let mut c = small_config();
        c.schemes.clear();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small_config();
        c.fieller.alpha = 0.7;
        assert!(c.validate().is_err());
    }
}
