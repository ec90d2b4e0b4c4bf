use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative development triangle: row `i` holds the values of origin period
/// `i` at development ages `0..row.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    origins: Vec<String>,
    ages: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Triangle {
    /// Checks the staircase shape (row lengths never grow going down) and that
    /// every row is cumulative.
    pub fn new(origins: Vec<String>, ages: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Triangle("triangle is empty".into()));
        }
        if origins.len() != rows.len() {
            return Err(Error::Triangle(format!(
                "{} origin labels for {} rows",
                origins.len(),
                rows.len()
            )));
        }
        if ages.len() < rows[0].len() {
            return Err(Error::Triangle("fewer age labels than columns".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if i > 0 && row.len() > rows[i - 1].len() {
                return Err(Error::Triangle(format!(
                    "origin `{}` has more ages than the one before it",
                    origins[i]
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Triangle(format!("origin `{}` has a non-finite value", origins[i])));
            }
            if row.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Triangle(format!(
                    "origin `{}` is not cumulative (decreases along development)",
                    origins[i]
                )));
            }
        }
        Ok(Self { origins, ages, rows })
    }

    pub fn origins(&self) -> &[String] {
        &self.origins
    }

    pub fn ages(&self) -> &[String] {
        &self.ages
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    /// Latest known value of every origin.
    pub fn latest(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.last().copied().unwrap_or(0.0)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            origins: self.origins.clone(),
            ages: self.ages.clone(),
            rows: self.rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect(),
        }
    }

    /// Reads a triangle CSV: a header of development ages after one leading
    /// cell, then one row per origin with blanks for future cells.
    pub fn read_csv<R: Read>(input: R, file: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let ages: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut origins = Vec::new();
        let mut rows = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let record = record?;
            let row_no = k + 2;
            let mut cells = record.iter();
            let Some(origin) = cells.next() else { continue };
            let mut values = Vec::new();
            let mut ended = false;
            for (j, cell) in cells.enumerate() {
                let column = ages.get(j).cloned().unwrap_or_else(|| format!("#{}", j + 2));
                if cell.is_empty() {
                    ended = true;
                    continue;
                }
                if ended {
                    return Err(Error::Parse {
                        file: file.into(),
                        row: row_no,
                        column,
                        message: "value after a blank cell".into(),
                    });
                }
                values.push(cell.parse::<f64>().map_err(|e| Error::Parse {
                    file: file.into(),
                    row: row_no,
                    column,
                    message: e.to_string(),
                })?);
            }
            origins.push(origin.to_string());
            rows.push(values);
        }
        Self::new(origins, ages, rows)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.ages.iter().cloned());
        w.write_record(&header)?;
        for (origin, row) in self.origins.iter().zip(&self.rows) {
            let mut rec = vec![origin.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.resize(self.ages.len() + 1, String::new());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<triangle>", e))?;
        Ok(())
    }
}

/// Length of origin and development periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Period {
    Days(u32),
    Months(u32),
}

impl Period {
    fn length(self) -> u32 {
        match self {
            Period::Days(n) | Period::Months(n) => n,
        }
    }

    /// Index of the period holding `date`, counted from the one holding `anchor`.
    fn index(self, anchor: NaiveDate, date: NaiveDate) -> i64 {
        match self {
            Period::Days(n) => (date - anchor).num_days().div_euclid(n as i64),
            Period::Months(n) => {
                let months = |d: NaiveDate| d.year() as i64 * 12 + d.month0() as i64;
                (months(date) - months(anchor)).div_euclid(n as i64)
            }
        }
    }

    fn anchor(self, first: NaiveDate) -> NaiveDate {
        match self {
            Period::Days(_) => first,
            Period::Months(_) => first.with_day(1).expect("day 1 exists"),
        }
    }
}

/// One payment on a claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payment {
    pub claim_id: String,
    pub occurrence_date: NaiveDate,
    pub payment_date: NaiveDate,
    pub amount: f64,
}

/// Reads `claim_id,occurrence_date,payment_date,amount` rows.
pub fn read_payments<R: Read>(input: R, file: &str) -> Result<Vec<Payment>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let expected = ["claim_id", "occurrence_date", "payment_date", "amount"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            file: file.into(),
            row: 1,
            column: "header".into(),
            message: format!("expected `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 2;
        let field = |j: usize| record.get(j).unwrap_or("");
        let err = |j: usize, message: String| Error::Parse {
            file: file.into(),
            row,
            column: expected[j].into(),
            message,
        };
        let date = |j: usize| {
            NaiveDate::parse_from_str(field(j), "%Y-%m-%d").map_err(|e| err(j, e.to_string()))
        };
        out.push(Payment {
            claim_id: field(0).to_string(),
            occurrence_date: date(1)?,
            payment_date: date(2)?,
            amount: field(3).parse().map_err(|e: std::num::ParseFloatError| err(3, e.to_string()))?,
        });
    }
    Ok(out)
}

/// Buckets `(occurrence, event, value)` triples into a cumulative triangle
/// with calendar-aligned origin and development periods. Events after the
/// reporting date are ignored.
fn bucket(
    events: impl Iterator<Item = (NaiveDate, NaiveDate, f64)> + Clone,
    period: Period,
    reporting_date: NaiveDate,
) -> Result<Triangle> {
    if period.length() == 0 {
        return Err(Error::Triangle("period length must be positive".into()));
    }
    let first = events
        .clone()
        .filter(|(occ, _, _)| *occ <= reporting_date)
        .map(|(occ, _, _)| occ)
        .min()
        .ok_or_else(|| Error::Triangle("no payments on or before the reporting date".into()))?;
    let anchor = period.anchor(first);
    let n = period.index(anchor, reporting_date) as usize + 1;
    let mut incremental = vec![vec![0.0; n]; n];
    for (occ, event, value) in events {
        if event < occ {
            return Err(Error::Triangle(format!("payment on {event} precedes occurrence {occ}")));
        }
        if event > reporting_date {
            continue;
        }
        let origin = period.index(anchor, occ) as usize;
        let age = period.index(anchor, event) as usize - origin;
        incremental[origin][age] += value;
    }
    let rows = incremental
        .into_iter()
        .enumerate()
        .map(|(i, inc)| {
            inc[..n - i]
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let len = period.length();
    let labels = |k: usize| ((k as u32 + 1) * len).to_string();
    Triangle::new((0..n).map(labels).collect(), (0..n).map(labels).collect(), rows)
}

/// Cumulative paid triangle.
pub fn build_triangle(payments: &[Payment], period: Period, reporting_date: NaiveDate) -> Result<Triangle> {
    bucket(
        payments.iter().map(|p| (p.occurrence_date, p.payment_date, p.amount)),
        period,
        reporting_date,
    )
}

/// Cumulative triangle of claim counts, each claim counted at its first payment.
pub fn build_count_triangle(
    payments: &[Payment],
    period: Period,
    reporting_date: NaiveDate,
) -> Result<Triangle> {
    let mut first: HashMap<&str, (NaiveDate, NaiveDate)> = HashMap::new();
    for p in payments {
        if p.payment_date > reporting_date {
            continue;
        }
        first
            .entry(&p.claim_id)
            .and_modify(|e| e.1 = e.1.min(p.payment_date))
            .or_insert((p.occurrence_date, p.payment_date));
    }
    let mut events: Vec<_> = first.into_values().map(|(o, d)| (o, d, 1.0)).collect();
    events.sort_by_key(|e| (e.0, e.1));
    bucket(events.into_iter(), period, reporting_date)
}
