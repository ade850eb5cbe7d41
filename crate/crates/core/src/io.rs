//! CSV ingestion and result tables.
//!
//! Input rows follow `journal_id,year,citations,countries`, with countries
//! `;`-separated. Output numbers carry 9 significant digits, and every
//! writer emits rows in a fixed order so repeated runs are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bootstrap::Lag0Coverage;
use crate::error::{Error, Result};
use crate::model::{validate_record, CitationRecord, Cohort, CountryCode, RawRecord, Scheme};
use crate::stability::{CellResult, CoverageCurve, SeriesPoint};

pub const INPUT_COLUMNS: [&str; 4] = ["journal_id", "year", "citations", "countries"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    /// Keep only these journals; `None` keeps all.
    pub journals: Option<BTreeSet<String>>,
    /// Keep only these years; `None` keeps all.
    pub years: Option<RangeInclusive<i32>>,
    /// Malformed rows tolerated before the ingest aborts.
    pub max_bad_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    /// Ordered by (journal, year).
    pub cohorts: Vec<Cohort>,
    pub records: usize,
    pub filtered_out: usize,
    pub row_errors: Vec<RowError>,
}

pub fn ingest(path: &Path, options: &IngestOptions) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, options)
}

pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<IngestReport> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    for col in INPUT_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let width = headers.len();

    let mut groups: BTreeMap<(String, i32), Vec<CitationRecord>> = BTreeMap::new();
    let mut row_errors = Vec::new();
    let (mut records, mut filtered_out) = (0, 0);
    for row in csv.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(e.into()),
                _ => {
                    let line = e.position().map_or(0, |p| p.line());
                    row_errors.push(RowError {
                        line,
                        kind: "Csv".into(),
                        message: e.to_string(),
                    });
                    continue;
                }
            },
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            row_errors.push(RowError {
                line,
                kind: "FieldCount".into(),
                message: format!("expected {width} fields, found {}", row.len()),
            });
            continue;
        }
        let parsed = row
            .deserialize::<RawRecord>(Some(&headers))
            .map_err(Error::from)
            .and_then(|raw| validate_record(&raw, None));
        let record = match parsed {
            Ok(r) => r,
            Err(e) => {
                row_errors.push(RowError {
                    line,
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let keep_journal = options
            .journals
            .as_ref()
            .is_none_or(|j| j.contains(&record.journal_id));
        let keep_year = options
            .years
            .as_ref()
            .is_none_or(|y| y.contains(&record.year));
        if !(keep_journal && keep_year) {
            filtered_out += 1;
            continue;
        }
        records += 1;
        groups
            .entry((record.journal_id.clone(), record.year))
            .or_default()
            .push(record);
    }

    if row_errors.len() > options.max_bad_rows {
        let first = &row_errors[0];
        return Err(Error::TooManyBadRows {
            count: row_errors.len(),
            tolerance: options.max_bad_rows,
            first_line: first.line,
            first_error: first.message.clone(),
        });
    }
    let cohorts = groups
        .into_values()
        .map(Cohort::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(IngestReport {
        cohorts,
        records,
        filtered_out,
        row_errors,
    })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Writes cohorts in the ingestion schema, in the given cohort order.
pub fn write_records<'a, W: Write>(
    w: W,
    cohorts: impl IntoIterator<Item = &'a Cohort>,
) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(INPUT_COLUMNS)?;
    for cohort in cohorts {
        for r in cohort.records() {
            out.write_record([
                r.journal_id.clone(),
                r.year.to_string(),
                r.citations.to_string(),
                r.countries_field(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

/// 9 significant digits, trailing zeros trimmed; scientific notation
/// outside `[1e-4, 1e9)`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let magnitude = x.abs();
    if !(1e-4..1e9).contains(&magnitude) {
        let s = format!("{x:.8e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{mantissa}e{exp}");
    }
    let digits_before = magnitude.log10().floor() as i32 + 1;
    let decimals = (9 - digits_before).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding may carry into a new digit (9.9999999995 -> 10.00000000).
    let carried = s
        .parse::<f64>()
        .is_ok_and(|r| r.abs() >= 10f64.powi(digits_before));
    let s = if carried && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    };
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn write_cells<W: Write>(w: W, cells: &[CellResult]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "journal_id",
        "year",
        "country",
        "scheme",
        "n_group",
        "n_field",
        "value",
        "ci_low",
        "ci_high",
        "ci_low_unclamped",
        "h",
        "se_mnlcs",
        "status",
    ])?;
    for c in cells {
        let e = &c.estimate;
        out.write_record([
            c.journal_id.clone(),
            c.year.to_string(),
            c.country.to_string(),
            c.scheme.to_string(),
            e.n_group.to_string(),
            e.n_field.to_string(),
            opt(e.value),
            opt(e.ci_low()),
            opt(e.ci_high()),
            opt(e.interval.map(|ci| ci.low)),
            opt(e.h),
            opt(e.se_mnlcs),
            e.validity.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("cells.csv", e))?;
    Ok(())
}

pub fn write_curves<W: Write>(w: W, curves: &[CoverageCurve]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "country",
        "scheme",
        "offset_years",
        "inside_fraction",
        "n_comparisons",
        "inside",
        "simulated",
        "excluded_base",
        "excluded_later",
    ])?;
    for curve in curves {
        for p in &curve.points {
            out.write_record([
                curve.country.to_string(),
                curve.scheme.to_string(),
                p.offset_years.to_string(),
                fmt_num(p.inside_fraction),
                p.n_comparisons.to_string(),
                if p.simulated {
                    String::new()
                } else {
                    p.inside.to_string()
                },
                p.simulated.to_string(),
                p.excluded_base.to_string(),
                p.excluded_later.to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("curves.csv", e))?;
    Ok(())
}

/// One row per offset, one column per country, ordered as given (the
/// figures list countries by output size). Empty where a country has no
/// point at that offset.
pub fn write_figure_curves<W: Write>(
    w: W,
    curves: &[CoverageCurve],
    scheme: Scheme,
    countries: &[CountryCode],
) -> Result<()> {
    let mut out = csv_writer(w);
    let mut header = vec!["offset_years".to_string(), "simulated".to_string()];
    header.extend(countries.iter().map(|c| c.to_string()));
    out.write_record(&header)?;
    let lookup: BTreeMap<(CountryCode, u32), f64> = curves
        .iter()
        .filter(|c| c.scheme == scheme)
        .flat_map(|c| {
            c.points
                .iter()
                .map(move |p| ((c.country, p.offset_years), p.inside_fraction))
        })
        .collect();
    let offsets: BTreeSet<u32> = lookup.keys().map(|k| k.1).collect();
    for offset in offsets {
        let mut row = vec![offset.to_string(), (offset == 0).to_string()];
        row.extend(
            countries
                .iter()
                .map(|&c| opt(lookup.get(&(c, offset)).copied())),
        );
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("figure", e))?;
    Ok(())
}

/// A series keyed by (journal, country, scheme).
pub type SeriesTable = Vec<((String, CountryCode, Scheme), Vec<SeriesPoint>)>;

pub fn write_series<W: Write>(w: W, series: &SeriesTable) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "journal_id",
        "country",
        "scheme",
        "year",
        "value",
        "ci_low",
        "ci_high",
        "status",
    ])?;
    for ((journal, country, scheme), points) in series {
        for p in points {
            out.write_record([
                journal.clone(),
                country.to_string(),
                scheme.to_string(),
                p.year.to_string(),
                opt(p.value),
                opt(p.ci_low),
                opt(p.ci_high),
                p.validity.to_string(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("series.csv", e))?;
    Ok(())
}

pub fn write_lag0<W: Write>(w: W, rows: &[(String, i32, Lag0Coverage)]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "journal_id",
        "year",
        "country",
        "scheme",
        "replicates",
        "compared",
        "inside",
        "fraction",
        "excluded_base",
        "excluded_later",
    ])?;
    for (journal, year, t) in rows {
        out.write_record([
            journal.clone(),
            year.to_string(),
            t.country.to_string(),
            t.scheme.to_string(),
            t.replicates.to_string(),
            t.compared.to_string(),
            t.inside.to_string(),
            opt(t.fraction()),
            t.excluded_base.to_string(),
            t.excluded_later.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("lag0.csv", e))?;
    Ok(())
}

/// A labelled count in exclusions.csv.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExclusionRow {
    pub country: CountryCode,
    pub scheme: Scheme,
    pub offset_years: u32,
    pub reason: &'static str,
    pub count: usize,
}

pub fn write_exclusions<W: Write>(w: W, rows: &[ExclusionRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["country", "scheme", "offset_years", "reason", "count"])?;
    for r in rows {
        out.write_record([
            r.country.to_string(),
            r.scheme.to_string(),
            r.offset_years.to_string(),
            r.reason.to_string(),
            r.count.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("exclusions.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ingest_str(s: &str, max_bad_rows: usize) -> Result<IngestReport> {
        ingest_reader(
            s.as_bytes(),
            &IngestOptions {
                max_bad_rows,
                ..Default::default()
            },
        )
    }

    #[test]
    fn empty_file_with_header() {
        let r = ingest_str("journal_id,year,citations,countries\n", 0).unwrap();
        assert!(r.cohorts.is_empty());
        assert_eq!(r.records, 0);
    }

    #[test]
    fn missing_column() {
        let err = ingest_str("journal_id,year,citations\nJ,2000,1\n", 0).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "countries"));
    }

    #[test]
    fn bad_row_aborts_with_line_number() {
        let data = "journal_id,year,citations,countries\nJ,2000,1,US\nJ,2000,-4,US\nJ,2001,2,\n";
        match ingest_str(data, 0).unwrap_err() {
            Error::TooManyBadRows {
                count, first_line, ..
            } => assert_eq!((count, first_line), (1, 3)),
            other => panic!("unexpected {other:?}"),
        }
        let report = ingest_str(data, 1).unwrap();
        assert_eq!(report.row_errors[0].kind, "NegativeCitations");
        assert_eq!(report.cohorts.len(), 2);
    }

    #[test]
    fn short_row_is_a_row_error() {
        let data = "journal_id,year,citations,countries\nJ,2000\n";
        let report = ingest_str(data, 5).unwrap();
        assert_eq!(report.row_errors.len(), 1);
        assert_eq!(report.row_errors[0].line, 2);
    }

    #[test]
    fn filters_and_grouping() {
        let data = "countries,journal_id,year,citations\nUS;JP,A,2000,3\n,A,2000,0\nGB,B,2000,1\nUS,A,1990,5\n";
        let opts = IngestOptions {
            journals: Some(["A".to_string()].into()),
            years: Some(1996..=2014),
            max_bad_rows: 0,
        };
        let r = ingest_reader(data.as_bytes(), &opts).unwrap();
        assert_eq!(r.cohorts.len(), 1);
        assert_eq!(r.cohorts[0].len(), 2);
        assert_eq!(r.filtered_out, 2);
        assert!(r.cohorts[0]
            .records()
            .iter()
            .any(|rec| rec.countries.is_empty()));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(4.0 / 3.0), "1.33333333");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.195055577990920), "-0.195055578");
        assert_eq!(fmt_num(123456.7891234), "123456.789");
        assert_eq!(fmt_num(9.9999999996), "10");
        assert_eq!(fmt_num(1.5e-7), "1.5e-7");
        assert_eq!(fmt_num(0.95), "0.95");
    }

    fn arb_record() -> impl Strategy<Value = CitationRecord> {
        let codes = ["US", "JP", "DE", "GB", "CN", "FR"];
        (
            prop::sample::select(vec!["J1", "J2", "Phys Rev B"]),
            1990i32..2020,
            0u64..100_000,
            prop::collection::btree_set(prop::sample::select(codes.to_vec()), 0..4),
        )
            .prop_map(|(j, y, c, set)| {
                CitationRecord::new(j, y, c, set.into_iter().map(|s| s.parse().unwrap()))
            })
    }

    proptest! {
        #[test]
        fn records_roundtrip(records in prop::collection::vec(arb_record(), 1..60)) {
            let mut groups: BTreeMap<(String, i32), Vec<CitationRecord>> = BTreeMap::new();
            for r in records {
                groups.entry((r.journal_id.clone(), r.year)).or_default().push(r);
            }
            let cohorts: Vec<Cohort> = groups.into_values().map(|v| Cohort::new(v).unwrap()).collect();
            let mut buf = Vec::new();
            write_records(&mut buf, &cohorts).unwrap();
            let back = ingest_reader(buf.as_slice(), &IngestOptions::default()).unwrap();
            prop_assert_eq!(back.cohorts, cohorts);
        }
    }
}
