use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use crate::conjugate::StudyEstimate;
use crate::error::{Error, Result, RowError};
use crate::portfolio::{CompoundRecord, Portfolio};

pub const PORTFOLIO_HEADER: [&str; 5] =
    ["compound_id", "study_id", "phase", "estimate", "std_error"];

/// One validated row of a portfolio file.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioCsvRow {
    pub compound_id: String,
    pub study_id: String,
    pub phase: String,
    pub estimate: f64,
    pub std_error: f64,
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::Fields)
        .from_reader(input)
}

/// Decimal-point float; rejects NaN/inf spellings and anything `f64` parsing
/// would not accept verbatim.
fn parse_number(field: &str, name: &str) -> std::result::Result<f64, String> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{name} '{field}' is not a finite decimal number"))
}

fn line_of(rec: &csv::StringRecord, fallback: u64) -> u64 {
    rec.position().map_or(fallback, |p| p.line())
}

/// Parses a portfolio CSV (header `compound_id,study_id,phase,estimate,std_error`).
///
/// Every row is checked; if any fail, all failures are returned together in
/// [`Error::Rows`] with their 1-based line numbers. Compounds appear in
/// order of first occurrence and studies keep file order.
pub fn parse_portfolio<R: Read>(input: R) -> Result<Portfolio> {
    let rows = parse_rows(input)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, CompoundRecord> = HashMap::new();
    for r in rows {
        let rec = by_id.entry(r.compound_id.clone()).or_insert_with(|| {
            order.push(r.compound_id.clone());
            CompoundRecord::new(r.compound_id.clone(), Vec::new())
        });
        rec.studies.push(StudyEstimate {
            estimate: r.estimate,
            std_error: r.std_error,
            label: Some(r.study_id),
        });
        rec.phases.push(r.phase);
    }
    let compounds = order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("id recorded on insert"))
        .collect();
    Portfolio::new(compounds)
}

pub fn parse_portfolio_path(path: impl AsRef<Path>) -> Result<Portfolio> {
    parse_portfolio(std::fs::File::open(path)?)
}

/// Row-level parse of a portfolio file.
pub fn parse_rows<R: Read>(input: R) -> Result<Vec<PortfolioCsvRow>> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::Rows(vec![RowError {
                line: 1,
                message: "empty input; expected header".into(),
            }]))
        }
        Some(r) => r.map_err(|e| Error::Validation(format!("unreadable CSV: {e}")))?,
    };
    if header.iter().collect::<Vec<_>>() != PORTFOLIO_HEADER {
        return Err(Error::Rows(vec![RowError {
            line: 1,
            message: format!(
                "header must be exactly '{}', got '{}'",
                PORTFOLIO_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        }]));
    }

    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut keys: HashMap<(String, String), u64> = HashMap::new();
    for (k, rec) in records.enumerate() {
        let fallback = k as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    line: e.position().map_or(fallback, |p| p.line()),
                    message: format!("unreadable record: {e}"),
                });
                continue;
            }
        };
        let line = line_of(&rec, fallback);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let mut problems = Vec::new();
        if rec.len() != PORTFOLIO_HEADER.len() {
            errors.push(RowError {
                line,
                message: format!("expected 5 fields, found {}", rec.len()),
            });
            continue;
        }
        for (i, name) in PORTFOLIO_HEADER.iter().enumerate() {
            if rec[i].is_empty() {
                problems.push(format!("missing {name}"));
            }
        }
        let estimate = match parse_number(&rec[3], "estimate") {
            Ok(v) => Some(v),
            Err(m) if !rec[3].is_empty() => {
                problems.push(m);
                None
            }
            Err(_) => None,
        };
        let std_error = match parse_number(&rec[4], "std_error") {
            Ok(v) if v > 0.0 => Some(v),
            Ok(v) => {
                problems.push(format!("std_error must be > 0, got {v}"));
                None
            }
            Err(m) if !rec[4].is_empty() => {
                problems.push(m);
                None
            }
            Err(_) => None,
        };
        if !rec[0].is_empty() && !rec[1].is_empty() {
            let key = (rec[0].to_string(), rec[1].to_string());
            if let Some(first) = keys.get(&key) {
                problems.push(format!(
                    "duplicate (compound_id, study_id) = ({}, {}), first seen on line {first}",
                    key.0, key.1
                ));
            } else {
                keys.insert(key, line);
            }
        }
        if !problems.is_empty() {
            errors.push(RowError {
                line,
                message: problems.join("; "),
            });
            continue;
        }
        out.push(PortfolioCsvRow {
            compound_id: rec[0].to_string(),
            study_id: rec[1].to_string(),
            phase: rec[2].to_string(),
            estimate: estimate.expect("checked"),
            std_error: std_error.expect("checked"),
        });
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    if out.is_empty() {
        return Err(Error::Validation("portfolio file has no data rows".into()));
    }
    Ok(out)
}

/// Writes a portfolio in the same CSV schema. Numbers use the shortest
/// representation that parses back to the identical `f64`.
pub fn write_portfolio<W: Write>(portfolio: &Portfolio, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(PORTFOLIO_HEADER).map_err(io)?;
    for c in portfolio.compounds() {
        for (j, s) in c.studies.iter().enumerate() {
            let study = s.label.clone().unwrap_or_else(|| (j + 1).to_string());
            w.write_record([
                c.compound_id.as_str(),
                study.as_str(),
                c.phase(j).unwrap_or(""),
                &s.estimate.to_string(),
                &s.std_error.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a list of estimates from a CSV whose header contains `estimate`
/// and `std_error` columns (other columns are ignored; a `label`,
/// `study_id` or `compound_id` column, if present, becomes the label).
pub fn parse_estimates<R: Read>(input: R) -> Result<Vec<StudyEstimate>> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Validation("empty input; expected header".into()))?
        .map_err(|e| Error::Validation(format!("unreadable CSV: {e}")))?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let (ie, is) = match (col("estimate"), col("std_error")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Rows(vec![RowError {
                line: 1,
                message: "header must contain 'estimate' and 'std_error' columns".into(),
            }]))
        }
    };
    let il = col("label")
        .or_else(|| col("study_id"))
        .or_else(|| col("compound_id"));

    let mut out = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (k, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::Validation(format!("unreadable CSV: {e}")))?;
        let line = line_of(&rec, k as u64 + 2);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parsed = parse_number(field(ie), "estimate").and_then(|e| {
            let se = parse_number(field(is), "std_error")?;
            if se > 0.0 {
                Ok((e, se))
            } else {
                Err(format!("std_error must be > 0, got {se}"))
            }
        });
        match parsed {
            Ok((e, se)) => {
                let label = il.map(|i| field(i).to_string()).filter(|l| !l.is_empty());
                if let Some(l) = &label {
                    if !seen.insert(l.clone()) {
                        errors.push(RowError {
                            line,
                            message: format!("duplicate label '{l}'"),
                        });
                        continue;
                    }
                }
                out.push(StudyEstimate {
                    estimate: e,
                    std_error: se,
                    label,
                });
            }
            Err(message) => errors.push(RowError { line, message }),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_one_compound() {
        let src =
            "compound_id,study_id,phase,estimate,std_error\nA,s1,2,0.31,0.08\nA,s2,3,0.22,0.05\n";
        let p = parse_portfolio(src.as_bytes()).unwrap();
        assert_eq!(p.n_compounds(), 1);
        assert_eq!(p.compounds()[0].studies.len(), 2);
        assert_eq!(p.compounds()[0].phases, ["2", "3"]);
        assert_eq!(p.compounds()[0].studies[1].label.as_deref(), Some("s2"));
    }

    #[test]
    fn zero_std_error_names_line() {
        let src = "compound_id,study_id,phase,estimate,std_error\nA,s1,2,0.31,0.08\nB,s1,2,0.4,0\n";
        match parse_portfolio(src.as_bytes()).unwrap_err() {
            Error::Rows(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].line, 3);
                assert!(rows[0].message.contains("std_error"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn collects_every_bad_row() {
        let src = "compound_id,study_id,phase,estimate,std_error\n\
                   A,s1,2,abc,0.1\n\
                   A,s1,2,0.1,0.1\n\
                   A,s1,2,0.2,0.1\n\
                   ,s9,2,0.2,0.1\n\
                   B,s1,2,0.2\n\
                   C,s1,2,0,1\n\
                   D,s1,2,\"1,5\",0.1\n";
        match parse_portfolio(src.as_bytes()).unwrap_err() {
            Error::Rows(rows) => {
                let lines: Vec<u64> = rows.iter().map(|r| r.line).collect();
                // The key on line 2 counts as taken even though its value is bad.
                assert_eq!(lines, [2, 3, 4, 5, 6, 8]);
                assert!(rows[0].message.contains("not a finite decimal"));
                assert!(rows[1].message.contains("duplicate"));
                assert!(rows[2].message.contains("duplicate"));
                assert!(rows[3].message.contains("missing compound_id"));
                assert!(rows[4].message.contains("expected 5 fields"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn header_must_match() {
        let src = "compound,study_id,phase,estimate,std_error\nA,s1,2,0.31,0.08\n";
        assert!(matches!(
            parse_portfolio(src.as_bytes()),
            Err(Error::Rows(_))
        ));
        assert!(parse_portfolio("".as_bytes()).is_err());
    }

    #[test]
    fn rejects_non_finite_spellings() {
        let src = "compound_id,study_id,phase,estimate,std_error\nA,s1,2,NaN,0.1\nB,s1,2,0.1,inf\n";
        match parse_portfolio(src.as_bytes()).unwrap_err() {
            Error::Rows(rows) => assert_eq!(rows.len(), 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn estimates_file() {
        let src = "label,estimate,std_error\na,0.3,0.1\nb,0.1,0.2\n";
        let e = parse_estimates(src.as_bytes()).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[1].label.as_deref(), Some("b"));
        assert!(parse_estimates("x,y\n1,2\n".as_bytes()).is_err());
        assert!(parse_estimates("estimate,std_error\n1,-2\n".as_bytes()).is_err());
    }
}
