//! Price CSV ingestion.
//!
//! Accepted layouts: a single close column, or `label, ..., close` where the
//! close is the last field. Delimiter (`,`, `;` or tab) and an optional header
//! row are detected from the first non-empty line.

use std::path::Path;

use crate::detrend::PriceSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Skip malformed rows instead of failing on the first one.
    pub lenient: bool,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub series: PriceSeries,
    /// `(line, reason)` for every row skipped in lenient mode.
    pub skipped: Vec<(usize, String)>,
    pub had_header: bool,
}

fn detect_delimiter(line: &str) -> u8 {
    if line.contains('\t') {
        b'\t'
    } else if line.contains(';') {
        b';'
    } else {
        b','
    }
}

fn parse_price(field: &str) -> std::result::Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("price {:?} is not a number", field.trim()))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("price {v} is not positive"));
    }
    Ok(v)
}

pub fn parse_prices(text: &str, opts: IngestOptions) -> Result<Ingested> {
    let first = text.lines().find(|l| !l.trim().is_empty());
    let Some(first) = first else {
        return Err(Error::InsufficientData("input contains no rows".into()));
    };
    let delim = detect_delimiter(first);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = Vec::new();
    let mut had_header = false;
    let mut seen_row = false;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let close = rec.get(rec.len() - 1).unwrap_or("");
        let parsed = parse_price(close);
        if !seen_row {
            seen_row = true;
            if close.trim().parse::<f64>().is_err() {
                had_header = true;
                continue;
            }
        }
        match parsed {
            Ok(v) => {
                values.push(v);
                labels.push(if rec.len() > 1 { rec[0].to_string() } else { String::new() });
            }
            Err(msg) if opts.lenient => skipped.push((line, msg)),
            Err(msg) => return Err(Error::Parse { line, msg }),
        }
    }
    if values.is_empty() {
        return Err(Error::InsufficientData("input contains no price rows".into()));
    }
    let series = if labels.iter().any(|l| !l.is_empty()) {
        PriceSeries::with_labels(values, labels)?
    } else {
        PriceSeries::new(values)?
    };
    Ok(Ingested {
        series,
        skipped,
        had_header,
    })
}

pub fn read_prices(path: impl AsRef<Path>, opts: IngestOptions) -> Result<Ingested> {
    let text = std::fs::read_to_string(path)?;
    parse_prices(&text, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_column_and_labels() {
        let r = parse_prices("1.0\n2.0\n3.5\n", IngestOptions::default()).unwrap();
        assert_eq!(r.series.values(), &[1.0, 2.0, 3.5]);
        assert!(r.series.labels().is_none());
        assert!(!r.had_header);

        let r = parse_prices("date;close\n2000-01-03; 10\n2000-01-04;11\n\n2000-01-05;12\n", IngestOptions::default())
            .unwrap();
        assert!(r.had_header);
        assert_eq!(r.series.values(), &[10.0, 11.0, 12.0]);
        assert_eq!(r.series.labels().unwrap()[2], "2000-01-05");

        let r = parse_prices("d,o,close\na,1,5\nb,1,6\nc,1,7\n", IngestOptions::default()).unwrap();
        assert_eq!(r.series.values(), &[5.0, 6.0, 7.0]);
    }

    #[test]
    fn reports_bad_rows_with_line_numbers() {
        let text = "close\n1\n2\n-3\n4\nabc\n5\n";
        match parse_prices(text, IngestOptions::default()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("positive"));
            }
            other => panic!("{other:?}"),
        }
        let r = parse_prices(text, IngestOptions { lenient: true }).unwrap();
        assert_eq!(r.series.values(), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(r.skipped.iter().map(|s| s.0).collect::<Vec<_>>(), vec![4, 6]);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(parse_prices("", IngestOptions::default()), Err(Error::InsufficientData(_))));
        assert!(matches!(parse_prices("close\n", IngestOptions::default()), Err(Error::InsufficientData(_))));
    }
}
