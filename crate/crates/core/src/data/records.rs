use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use csv::StringRecord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POLICY_HEADER: [&str; 5] = [
    "policy_id",
    "start_date",
    "end_date",
    "deductible",
    "limitation_days",
];

pub const CLAIMS_HEADER: [&str; 7] = [
    "policy_id",
    "claim_id",
    "occurrence_date",
    "report_date",
    "settlement_date",
    "paid_to_date",
    "settled",
];

/// One row of the policy register.
///
/// `end_date` is exclusive: a policy from 2017-01-01 to 2018-01-01 covers 365 days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub policy_id: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub deductible: f64,
    /// Reporting window after occurrence, in days; `None` uses the run default.
    pub limitation_days: Option<u32>,
    /// 1-based data row in the source file (0 when not read from a file).
    #[serde(skip)]
    pub row: usize,
}

/// One row of the claims register, as known at the reporting date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub policy_id: String,
    pub claim_id: String,
    pub occurrence_date: NaiveDate,
    pub report_date: NaiveDate,
    pub settlement_date: Option<NaiveDate>,
    pub paid_to_date: f64,
    pub settled: bool,
    #[serde(skip)]
    pub row: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registers {
    pub policies: Vec<PolicyRecord>,
    pub claims: Vec<ClaimRecord>,
}

/// Reads both registers and checks that every claim references a known policy.
pub fn parse_registers(policy_path: &Path, claims_path: &Path) -> Result<Registers> {
    let policies = read_policies(open(policy_path)?, &policy_path.display().to_string())?;
    let claims_label = claims_path.display().to_string();
    let claims = read_claims(open(claims_path)?, &claims_label)?;
    let known: HashSet<&str> = policies.iter().map(|p| p.policy_id.as_str()).collect();
    if let Some(c) = claims.iter().find(|c| !known.contains(c.policy_id.as_str())) {
        return Err(Error::UnknownPolicy {
            file: claims_label,
            row: c.row,
            policy_id: c.policy_id.clone(),
        });
    }
    Ok(Registers { policies, claims })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Column lookup by header name with row-aware error construction.
struct Columns<'a> {
    file: &'a str,
    index: Vec<usize>,
    names: &'a [&'a str],
}

impl<'a> Columns<'a> {
    fn new(file: &'a str, header: &StringRecord, names: &'a [&'a str]) -> Result<Self> {
        let mut index = Vec::with_capacity(names.len());
        for name in names {
            match header.iter().position(|h| h.trim() == *name) {
                Some(i) => index.push(i),
                None => {
                    return Err(Error::Parse {
                        file: file.to_string(),
                        row: 0,
                        column: name.to_string(),
                        message: "missing column in header".into(),
                    })
                }
            }
        }
        Ok(Self { file, index, names })
    }

    fn err(&self, row: usize, col: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.to_string(),
            row,
            column: self.names[col].to_string(),
            message: message.into(),
        }
    }

    fn raw<'r>(&self, rec: &'r StringRecord, row: usize, col: usize) -> Result<&'r str> {
        rec.get(self.index[col])
            .map(str::trim)
            .ok_or_else(|| self.err(row, col, "missing field"))
    }

    fn text(&self, rec: &StringRecord, row: usize, col: usize) -> Result<String> {
        let v = self.raw(rec, row, col)?;
        if v.is_empty() {
            return Err(self.err(row, col, "empty value"));
        }
        Ok(v.to_string())
    }

    fn date(&self, rec: &StringRecord, row: usize, col: usize) -> Result<NaiveDate> {
        let v = self.raw(rec, row, col)?;
        NaiveDate::parse_from_str(v, "%Y-%m-%d")
            .map_err(|e| self.err(row, col, format!("invalid date `{v}`: {e}")))
    }

    fn opt_date(&self, rec: &StringRecord, row: usize, col: usize) -> Result<Option<NaiveDate>> {
        if self.raw(rec, row, col)?.is_empty() {
            Ok(None)
        } else {
            self.date(rec, row, col).map(Some)
        }
    }

    fn money(&self, rec: &StringRecord, row: usize, col: usize) -> Result<f64> {
        let v = self.raw(rec, row, col)?;
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.err(row, col, format!("invalid amount `{v}`"))),
        }
    }

    fn opt_days(&self, rec: &StringRecord, row: usize, col: usize) -> Result<Option<u32>> {
        let v = self.raw(rec, row, col)?;
        if v.is_empty() {
            return Ok(None);
        }
        v.parse::<u32>()
            .map(Some)
            .map_err(|_| self.err(row, col, format!("invalid day count `{v}`")))
    }

    fn flag(&self, rec: &StringRecord, row: usize, col: usize) -> Result<bool> {
        match self.raw(rec, row, col)?.to_ascii_lowercase().as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(self.err(row, col, format!("expected true/false, got `{other}`"))),
        }
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

pub fn read_policies<R: Read>(input: R, file: &str) -> Result<Vec<PolicyRecord>> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    let cols = Columns::new(file, &header, &POLICY_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        out.push(PolicyRecord {
            policy_id: cols.text(&rec, row, 0)?,
            start_date: cols.date(&rec, row, 1)?,
            end_date: cols.date(&rec, row, 2)?,
            deductible: cols.money(&rec, row, 3)?,
            limitation_days: cols.opt_days(&rec, row, 4)?,
            row,
        });
    }
    Ok(out)
}

pub fn read_claims<R: Read>(input: R, file: &str) -> Result<Vec<ClaimRecord>> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    let cols = Columns::new(file, &header, &CLAIMS_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        out.push(ClaimRecord {
            policy_id: cols.text(&rec, row, 0)?,
            claim_id: cols.text(&rec, row, 1)?,
            occurrence_date: cols.date(&rec, row, 2)?,
            report_date: cols.date(&rec, row, 3)?,
            settlement_date: cols.opt_date(&rec, row, 4)?,
            paid_to_date: cols.money(&rec, row, 5)?,
            settled: cols.flag(&rec, row, 6)?,
            row,
        });
    }
    Ok(out)
}

pub fn write_policies<W: Write>(out: W, policies: &[PolicyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POLICY_HEADER)?;
    for p in policies {
        w.write_record([
            p.policy_id.clone(),
            p.start_date.to_string(),
            p.end_date.to_string(),
            format!("{:.2}", p.deductible),
            p.limitation_days.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<policy register>", e))?;
    Ok(())
}

pub fn write_claims<W: Write>(out: W, claims: &[ClaimRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CLAIMS_HEADER)?;
    for c in claims {
        w.write_record([
            c.policy_id.clone(),
            c.claim_id.clone(),
            c.occurrence_date.to_string(),
            c.report_date.to_string(),
            c.settlement_date.map(|d| d.to_string()).unwrap_or_default(),
            format!("{:.2}", c.paid_to_date),
            c.settled.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<claims register>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const POLICIES: &str = "policy_id,start_date,end_date,deductible,limitation_days\n\
                            P1,2017-01-01,2018-01-01,10000,730\n";

    #[test]
    fn parses_policy_row() {
        let p = read_policies(POLICIES.as_bytes(), "policies.csv").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].deductible, 10_000.0);
        assert_eq!(p[0].limitation_days, Some(730));
        assert_eq!(p[0].row, 1);
    }

    #[test]
    fn empty_claims_file_is_fine() {
        let c = read_claims(CLAIMS_HEADER.join(",").as_bytes(), "claims.csv").unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn malformed_row_names_file_row_and_column() {
        let text = "policy_id,start_date,end_date,deductible,limitation_days\n\
                    P1,2017-01-01,2018-01-01,10000,\n\
                    P2,2017-13-01,2018-01-01,0,\n";
        let err = read_policies(text.as_bytes(), "policies.csv").unwrap_err();
        match err {
            Error::Parse { file, row, column, .. } => {
                assert_eq!(file, "policies.csv");
                assert_eq!(row, 2);
                assert_eq!(column, "start_date");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn bad_settled_flag() {
        let text = format!(
            "{}\nP1,C1,2017-05-16,2017-09-03,,95000,maybe\n",
            CLAIMS_HEADER.join(",")
        );
        let err = read_claims(text.as_bytes(), "claims.csv").unwrap_err();
        assert!(err.to_string().contains("settled"));
    }

    #[test]
    fn missing_header_column() {
        let err = read_policies("policy_id,start_date\n".as_bytes(), "p.csv").unwrap_err();
        assert!(err.to_string().contains("end_date"));
    }

    #[test]
    fn write_then_read_preserves_records() {
        let p = read_policies(POLICIES.as_bytes(), "p").unwrap();
        let mut buf = Vec::new();
        write_policies(&mut buf, &p).unwrap();
        assert_eq!(read_policies(buf.as_slice(), "p").unwrap(), p);
    }
}
