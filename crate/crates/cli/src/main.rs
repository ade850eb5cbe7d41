//! `mnlcs` command-line driver.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mnlcs::bootstrap::{coverage_probability_sim, CoverageSimSpec};
use mnlcs::counting::top_countries;
use mnlcs::experiment::{self, ExperimentConfig, InputSource};
use mnlcs::fieller::FiellerForm;
use mnlcs::io::{self as mio, IngestOptions};
use mnlcs::stability::{compute_cells, lag0_table};
use mnlcs::synth::{self, ScenarioSpec};
use mnlcs::{CountryCode, Execution, Scheme};

#[derive(Parser, Debug)]
#[command(
    name = "mnlcs",
    version,
    about = "MNLCS citation indicator and temporal stability experiment"
)]
struct Cli {
    /// Run every loop on one thread (output is identical either way).
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate an input CSV and summarise what would be analysed.
    IngestCheck(AnalysisArgs),
    /// Compute MNLCS with Fieller intervals for every journal-year cell.
    Indicator(AnalysisArgs),
    /// Run the year-offset stability analysis and write all tables.
    Stability(AnalysisArgs),
    /// Split-half lag-0 coverage, for one cell or for all of them.
    Bootstrap(BootstrapArgs),
    /// Generate synthetic records, or run the two-sample coverage simulation.
    Simulate(SimulateArgs),
    /// Run the full experiment from a config file (or a previous manifest).
    Run(RunArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Inclusive,
    Exclusive,
    Both,
}

impl SchemeArg {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeArg::Inclusive => vec![Scheme::Inclusive],
            SchemeArg::Exclusive => vec![Scheme::Exclusive],
            SchemeArg::Both => Scheme::ALL.to_vec(),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormArg {
    Standard,
    Printed,
}

impl From<FormArg> for FiellerForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Standard => FiellerForm::Standard,
            FormArg::Printed => FiellerForm::Printed,
        }
    }
}

/// Options shared by every subcommand that analyses a data set. Flags
/// override the corresponding config-file values.
#[derive(Args, Debug, Clone, Default)]
struct AnalysisArgs {
    /// Experiment config (TOML, or JSON such as a run manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with columns journal_id, year, citations, countries.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; tables go to stdout when omitted (where possible).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    min_group_n: Option<usize>,
    #[arg(long, value_enum)]
    fieller_form: Option<FormArg>,
    /// Comma-separated country codes; defaults to the top-k by article count.
    #[arg(long, value_delimiter = ',')]
    countries: Vec<String>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Keep only these journals (repeatable).
    #[arg(long = "journal")]
    journals: Vec<String>,
    #[arg(long)]
    first_year: Option<i32>,
    #[arg(long)]
    last_year: Option<i32>,
    /// Malformed rows tolerated before ingestion fails.
    #[arg(long)]
    max_bad_rows: Option<usize>,
    /// Split-half replicates per journal-year (0 disables the lag-0 point).
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    max_offset: Option<u32>,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Restrict to one cell: journal id (requires --year and one country).
    #[arg(long = "cell-journal", requires = "year")]
    cell_journal: Option<String>,
    #[arg(long, requires = "cell_journal")]
    year: Option<i32>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario spec (TOML or JSON) for synthetic record generation.
    #[arg(long, conflicts_with = "n_first")]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for records.csv; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// First-sample size for the two-sample coverage simulation.
    #[arg(long, requires = "n_second")]
    n_first: Option<usize>,
    #[arg(long, requires = "n_first")]
    n_second: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    #[arg(long, default_value_t = 10_000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => err.exit(),
        Err(err) => {
            let message = err.kind().to_string();
            let detail = err.render().to_string();
            let detail = detail
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!(
                "{}",
                json!({ "error": "Usage", "message": if detail.is_empty() { message } else { detail.to_string() } })
            );
            return ExitCode::from(2);
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match dispatch(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Library errors already include their causes in the message.
            let report = match err.downcast_ref::<mnlcs::Error>() {
                Some(e) => json!({ "error": e.kind(), "message": e.to_string() }),
                None => {
                    let kind = err
                        .chain()
                        .find_map(|e| e.downcast_ref::<mnlcs::Error>())
                        .map_or("Error", mnlcs::Error::kind);
                    json!({ "error": kind, "message": format!("{err:#}") })
                }
            };
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command, exec: Execution) -> Result<()> {
    match command {
        Command::IngestCheck(args) => ingest_check(&args),
        Command::Indicator(args) => indicator(&args, exec),
        Command::Stability(args) => {
            let config = build_config(&args)?;
            let out = args
                .out
                .as_deref()
                .ok_or_else(|| anyhow!("--out is required"))?;
            run_and_report(&config, out, exec)
        }
        Command::Bootstrap(args) => bootstrap(&args, exec),
        Command::Simulate(args) => simulate(&args, exec),
        Command::Run(args) => {
            let mut config = ExperimentConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                config.set_seed(seed);
            }
            run_and_report(&config, &args.out, exec)
        }
    }
}

fn build_config(args: &AnalysisArgs) -> Result<ExperimentConfig> {
    let mut config = match (&args.config, &args.input) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(input)) => ExperimentConfig::from_source(InputSource::File {
            path: std::path::absolute(input)?,
            journals: None,
            max_bad_rows: 0,
        }),
        (None, None) => bail!("either --config or --input is required"),
    };
    if let (Some(input), InputSource::File { path, .. }) = (&args.input, &mut config.input) {
        *path = std::path::absolute(input)?;
    }
    if let InputSource::File {
        journals,
        max_bad_rows,
        ..
    } = &mut config.input
    {
        if !args.journals.is_empty() {
            *journals = Some(args.journals.clone());
        }
        if let Some(n) = args.max_bad_rows {
            *max_bad_rows = n;
        }
    }
    if let Some(seed) = args.seed {
        config.set_seed(seed);
    }
    if let Some(scheme) = args.scheme {
        config.schemes = scheme.schemes();
    }
    if let Some(n) = args.min_group_n {
        config.fieller.min_group_n = n;
    }
    if let Some(form) = args.fieller_form {
        config.fieller.form = form.into();
    }
    if !args.countries.is_empty() {
        config.countries = args
            .countries
            .iter()
            .map(|c| c.trim().parse::<CountryCode>())
            .collect::<mnlcs::Result<_>>()?;
    }
    if let Some(k) = args.top_k {
        config.top_k = k;
    }
    if args.first_year.is_some() {
        config.first_year = args.first_year;
    }
    if args.last_year.is_some() {
        config.last_year = args.last_year;
    }
    if let Some(r) = args.replicates {
        config.bootstrap_replicates = r;
    }
    if args.max_offset.is_some() {
        config.max_offset = args.max_offset;
    }
    config.validate()?;
    Ok(config)
}

/// Writes to `<out>/<name>` when an output directory is given, else stdout.
fn emit<F>(out: Option<&Path>, name: &str, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> mnlcs::Result<()>,
{
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            let mut file = io::BufWriter::new(
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            write(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn ingest_check(args: &AnalysisArgs) -> Result<()> {
    let config = build_config(args)?;
    let InputSource::File {
        path,
        journals,
        max_bad_rows,
    } = &config.input
    else {
        bail!("ingest-check needs a CSV input");
    };
    let options = IngestOptions {
        journals: journals.as_ref().map(|j| j.iter().cloned().collect()),
        years: match (config.first_year, config.last_year) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(i32::MIN)..=b.unwrap_or(i32::MAX)),
        },
        max_bad_rows: *max_bad_rows,
    };
    let report = mio::ingest(path, &options)?;
    let journals: std::collections::BTreeSet<&str> =
        report.cohorts.iter().map(|c| c.journal_id()).collect();
    let ranked = top_countries(&report.cohorts, config.top_k);
    let summary = json!({
        "records": report.records,
        "cohorts": report.cohorts.len(),
        "journals": journals.len(),
        "first_year": report.cohorts.iter().map(|c| c.year()).min(),
        "last_year": report.cohorts.iter().map(|c| c.year()).max(),
        "filtered_out": report.filtered_out,
        "rejected_rows": report.row_errors.len(),
        "row_errors": report.row_errors.iter().take(20).collect::<Vec<_>>(),
        "top_countries": ranked.ranking.iter()
            .map(|(c, n)| json!({ "country": c.to_string(), "articles": n }))
            .collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn indicator(args: &AnalysisArgs, exec: Execution) -> Result<()> {
    let config = build_config(args)?;
    let data = experiment::load_cohorts(&config, exec)?;
    let countries = experiment::resolve_countries(&config, &data.cohorts);
    let cells = compute_cells(
        &data.cohorts,
        &countries,
        &config.schemes,
        &config.fieller,
        exec,
    );
    emit(args.out.as_deref(), "cells.csv", |w| {
        mio::write_cells(w, &cells)
    })
}

fn bootstrap(args: &BootstrapArgs, exec: Execution) -> Result<()> {
    let config = build_config(&args.analysis)?;
    let data = experiment::load_cohorts(&config, exec)?;
    let replicates = config.bootstrap_replicates.max(1);
    if let (Some(journal), Some(year)) = (&args.cell_journal, args.year) {
        let [country] = config.countries[..] else {
            bail!("a single-cell bootstrap needs exactly one --countries code");
        };
        let [scheme] = config.schemes[..] else {
            bail!("a single-cell bootstrap needs --scheme inclusive or exclusive");
        };
        let tally = experiment::cell_lag0(
            &data.cohorts,
            journal,
            year,
            country,
            scheme,
            replicates,
            config.seed,
            &config.fieller,
            exec,
        )?;
        let out = json!({
            "journal_id": journal,
            "year": year,
            "coverage": tally.fraction(),
            "tally": tally,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    let countries = experiment::resolve_countries(&config, &data.cohorts);
    let rows = lag0_table(
        &data.cohorts,
        &countries,
        &config.schemes,
        replicates,
        config.seed,
        &config.fieller,
        exec,
    );
    emit(args.analysis.out.as_deref(), "lag0.csv", |w| {
        mio::write_lag0(w, &rows)
    })
}

fn simulate(args: &SimulateArgs, exec: Execution) -> Result<()> {
    if let (Some(n_first), Some(n_second)) = (args.n_first, args.n_second) {
        let spec = CoverageSimSpec {
            mu0: args.mu0,
            sigma0: args.sigma0,
            alpha: args.alpha,
            ..CoverageSimSpec::new(n_first, n_second, args.replicates, args.seed.unwrap_or(0))
        };
        let coverage = coverage_probability_sim(&spec, exec)?;
        let out = json!({ "spec": spec, "coverage": coverage });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    let Some(path) = &args.scenario else {
        bail!("simulate needs --scenario, or --n-first and --n-second");
    };
    let mut spec = ScenarioSpec::load(path)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let cohorts = synth::generate_with(&spec, exec)?;
    emit(args.out.as_deref(), "records.csv", |w| {
        mio::write_records(w, &cohorts)
    })
}

fn run_and_report(config: &ExperimentConfig, out: &Path, exec: Execution) -> Result<()> {
    let manifest = experiment::run_experiment(config, out, exec)?;
    let summary = json!({
        "out": out.display().to_string(),
        "config_hash": manifest.config_hash,
        "cohorts": manifest.cohorts,
        "records": manifest.records,
        "countries": manifest.countries.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "outputs": manifest.outputs.keys().collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
