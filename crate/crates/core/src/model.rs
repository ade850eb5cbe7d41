//! Domain types shared across the crate.
//!
//! Everything here is immutable once built. A [`Cohort`] keeps its records in
//! canonical order so that index-based selections and seeded resampling do
//! not depend on the order rows arrived in.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::countries;
use crate::error::{Error, Result};

/// ISO-3166 alpha-2 country code, always stored uppercase.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn as_str(&self) -> &str {
        // Only ASCII uppercase letters are ever stored.
        std::str::from_utf8(&self.0).expect("ascii country code")
    }

    /// Maps a free-text name through the bundled table, else parses a
    /// two-letter code. The table goes first so that "UK" becomes GB.
    pub fn parse_token(token: &str) -> Result<Self> {
        let token = token.trim();
        if let Some(code) = countries::lookup(token) {
            return Ok(code);
        }
        token.parse()
    }
}

impl FromStr for CountryCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        if bytes.len() == 2 && bytes.iter().all(u8::is_ascii_alphabetic) {
            Ok(CountryCode([
                bytes[0].to_ascii_uppercase(),
                bytes[1].to_ascii_uppercase(),
            ]))
        } else {
            Err(Error::BadCountry(s.to_string()))
        }
    }
}

impl TryFrom<String> for CountryCode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CountryCode> for String {
    fn from(c: CountryCode) -> String {
        c.as_str().to_string()
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CountryCode({})", self.as_str())
    }
}

/// One article. Field order doubles as the canonical sort order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CitationRecord {
    pub journal_id: String,
    pub year: i32,
    pub citations: u64,
    pub countries: BTreeSet<CountryCode>,
}

impl CitationRecord {
    pub fn new(
        journal_id: impl Into<String>,
        year: i32,
        citations: u64,
        countries: impl IntoIterator<Item = CountryCode>,
    ) -> Self {
        CitationRecord {
            journal_id: journal_id.into(),
            year,
            citations,
            countries: countries.into_iter().collect(),
        }
    }

    /// `ln(1 + c)`, the transform every statistic in the crate works on.
    pub fn log_citations(&self) -> f64 {
        (self.citations as f64).ln_1p()
    }

    /// The semicolon-joined country field as written to CSV.
    pub fn countries_field(&self) -> String {
        let codes: Vec<&str> = self.countries.iter().map(CountryCode::as_str).collect();
        codes.join(";")
    }
}

/// An unvalidated CSV row.
#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
pub struct RawRecord {
    pub journal_id: String,
    pub year: String,
    pub citations: String,
    #[serde(default)]
    pub countries: String,
}

/// Validates and normalises one raw row.
///
/// Country tokens are separated by `;`, uppercased and deduplicated; free-text
/// names are mapped through the bundled table. An empty country field gives
/// an empty set, and such records still count towards the field denominator.
pub fn validate_record(
    raw: &RawRecord,
    years: Option<&RangeInclusive<i32>>,
) -> Result<CitationRecord> {
    let journal_id = raw.journal_id.trim();
    if journal_id.is_empty() {
        return Err(Error::EmptyJournal);
    }
    let year: i32 = raw
        .year
        .trim()
        .parse()
        .map_err(|_| Error::BadYear(raw.year.clone()))?;
    if let Some(range) = years {
        if !range.contains(&year) {
            return Err(Error::YearOutOfRange {
                year,
                first: *range.start(),
                last: *range.end(),
            });
        }
    }
    let citations_text = raw.citations.trim();
    let citations: u64 = match citations_text.parse::<u64>() {
        Ok(c) => c,
        Err(_) => match citations_text.parse::<i64>() {
            Ok(c) if c < 0 => return Err(Error::NegativeCitations(c)),
            _ => return Err(Error::BadCitations(raw.citations.clone())),
        },
    };
    let countries = raw
        .countries
        .split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(CountryCode::parse_token)
        .collect::<Result<BTreeSet<_>>>()?;
    Ok(CitationRecord {
        journal_id: journal_id.to_string(),
        year,
        citations,
        countries,
    })
}

/// All articles of one journal in one year: the normalisation field.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    journal_id: String,
    year: i32,
    records: Vec<CitationRecord>,
    log_citations: Vec<f64>,
}

impl Cohort {
    /// Builds a cohort, sorting the records into canonical order.
    pub fn new(mut records: Vec<CitationRecord>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyCohort)?;
        let (journal_id, year) = (first.journal_id.clone(), first.year);
        if let Some(bad) = records
            .iter()
            .find(|r| r.journal_id != journal_id || r.year != year)
        {
            return Err(Error::MixedCohort {
                journal: bad.journal_id.clone(),
                year: bad.year,
                cohort_journal: journal_id,
                cohort_year: year,
            });
        }
        records.sort_unstable();
        let log_citations = records.iter().map(CitationRecord::log_citations).collect();
        Ok(Cohort {
            journal_id,
            year,
            records,
            log_citations,
        })
    }

    pub fn journal_id(&self) -> &str {
        &self.journal_id
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn records(&self) -> &[CitationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cached `ln(1 + c)` per record, aligned with [`Cohort::records`].
    pub fn log_citations(&self) -> &[f64] {
        &self.log_citations
    }

    pub fn citations(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.citations)
    }

    /// Sub-cohort made of the given record indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Cohort::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }
}

/// Whole-counting scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Any author from the country.
    Inclusive,
    /// Only authors from the country.
    Exclusive,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Inclusive, Scheme::Exclusive];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Inclusive => "inclusive",
            Scheme::Exclusive => "exclusive",
        }
    }

    /// Whether an article with these author countries counts for `country`.
    pub fn admits(self, countries: &BTreeSet<CountryCode>, country: CountryCode) -> bool {
        match self {
            Scheme::Inclusive => countries.contains(&country),
            Scheme::Exclusive => countries.len() == 1 && countries.contains(&country),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inclusive" => Ok(Scheme::Inclusive),
            "exclusive" => Ok(Scheme::Exclusive),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// The articles of one cohort that count for a country under a scheme.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSelection {
    pub country: CountryCode,
    pub scheme: Scheme,
    pub member_indices: Vec<usize>,
}

impl GroupSelection {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    /// `ln(1 + c)` values of the members, in index order.
    pub fn log_citations<'a>(
        &'a self,
        cohort: &'a Cohort,
    ) -> impl Iterator<Item = f64> + Clone + 'a {
        self.member_indices
            .iter()
            .map(move |&i| cohort.log_citations()[i])
    }
}

/// Sample size, mean and standard error of `ln(1 + c)`.
///
/// `se` is `None` for a single observation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogStats {
    pub n: usize,
    pub mean: f64,
    pub se: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Validity {
    Ok,
    UnboundedFieller,
    InsufficientData,
    DegenerateField,
}

impl Validity {
    pub fn as_str(self) -> &'static str {
        match self {
            Validity::Ok => "ok",
            Validity::UnboundedFieller => "unbounded_fieller",
            Validity::InsufficientData => "insufficient_data",
            Validity::DegenerateField => "degenerate_field",
        }
    }
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bounded Fieller interval. `low` is not clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiellerInterval {
    pub center: f64,
    pub half_width: f64,
    pub low: f64,
    pub high: f64,
}

impl FiellerInterval {
    pub fn new(center: f64, half_width: f64) -> Self {
        FiellerInterval {
            center,
            half_width,
            low: center - half_width,
            high: center + half_width,
        }
    }

    /// Closed-interval membership on the unclamped bounds.
    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// MNLCS point value plus its interval and diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnlcsEstimate {
    /// `None` when the group is empty or the field is degenerate.
    pub value: Option<f64>,
    /// Present only when `validity == Ok`.
    pub interval: Option<FiellerInterval>,
    pub h: Option<f64>,
    pub se_mnlcs: Option<f64>,
    pub n_group: usize,
    pub n_field: usize,
    pub validity: Validity,
}

impl MnlcsEstimate {
    pub(crate) fn without_interval(
        value: Option<f64>,
        n_group: usize,
        n_field: usize,
        validity: Validity,
    ) -> Self {
        MnlcsEstimate {
            value,
            interval: None,
            h: None,
            se_mnlcs: None,
            n_group,
            n_field,
            validity,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.validity == Validity::Ok
    }

    /// Reported lower bound, clamped at zero.
    pub fn ci_low(&self) -> Option<f64> {
        self.interval.map(|ci| ci.low.max(0.0))
    }

    pub fn ci_high(&self) -> Option<f64> {
        self.interval.map(|ci| ci.high)
    }

    /// Unclamped closed-interval membership; `false` without a bounded interval.
    pub fn contains(&self, x: f64) -> bool {
        self.interval.is_some_and(|ci| ci.contains(x))
    }

    /// The point value, if the group met the size threshold and the field was
    /// usable. Unbounded intervals do not disqualify the point value.
    pub fn usable_value(&self) -> Option<f64> {
        match self.validity {
            Validity::Ok | Validity::UnboundedFieller => self.value,
            Validity::InsufficientData | Validity::DegenerateField => None,
        }
    }
}
