use std::path::PathBuf;

use crate::model::Scheme;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("negative citation count {0}")]
    NegativeCitations(i64),
    #[error("unparseable citation count {0:?}")]
    BadCitations(String),
    #[error("unparseable year {0:?}")]
    BadYear(String),
    #[error("year {year} outside configured range {first}..={last}")]
    YearOutOfRange { year: i32, first: i32, last: i32 },
    #[error("malformed country token {0:?}")]
    BadCountry(String),
    #[error("empty journal id")]
    EmptyJournal,
    #[error("cohort must contain at least one record")]
    EmptyCohort,
    #[error(
        "record ({journal}, {year}) does not belong to cohort ({cohort_journal}, {cohort_year})"
    )]
    MixedCohort {
        journal: String,
        year: i32,
        cohort_journal: String,
        cohort_year: i32,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("field mean of ln(1+c) is zero; ratio undefined")]
    DegenerateField,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no valid replicates ({excluded} of {replicates} excluded)")]
    NoValidReplicates { replicates: usize, excluded: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing column {0:?} in CSV header")]
    MissingColumn(String),
    #[error("{count} malformed rows exceed tolerance {tolerance}; first at line {first_line}: {first_error}")]
    TooManyBadRows {
        count: usize,
        tolerance: usize,
        first_line: u64,
        first_error: String,
    },
    #[error("cell ({journal}, {year}, {country}, {scheme}): {source}")]
    Cell {
        journal: String,
        year: i32,
        country: String,
        scheme: Scheme,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable machine-readable name, used for the CLI's stderr report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NegativeCitations(_) => "NegativeCitations",
            Error::BadCitations(_) => "BadCitations",
            Error::BadYear(_) => "BadYear",
            Error::YearOutOfRange { .. } => "YearOutOfRange",
            Error::BadCountry(_) => "BadCountry",
            Error::EmptyJournal => "EmptyJournal",
            Error::EmptyCohort => "EmptyCohort",
            Error::MixedCohort { .. } => "MixedCohort",
            Error::InsufficientData(_) => "InsufficientData",
            Error::DegenerateField => "DegenerateField",
            Error::Domain(_) => "DomainError",
            Error::NoValidReplicates { .. } => "NoValidReplicates",
            Error::Config(_) => "Config",
            Error::MissingColumn(_) => "MissingColumn",
            Error::TooManyBadRows { .. } => "TooManyBadRows",
            Error::Cell { source, .. } => source.kind(),
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
            Error::Toml(_) => "Toml",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
