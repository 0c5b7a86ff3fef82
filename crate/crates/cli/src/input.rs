use std::fs::File;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// One row of an observations file, with its 1-based line number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub t: f64,
    pub paid: f64,
    pub line: u64,
}

/// Read a `t,paid` CSV: strictly increasing `t >= 0`, nondecreasing
/// `paid >= 0`.
pub fn read_observations(path: &Path) -> CliResult<Vec<Reading>> {
    let file = File::open(path).map_err(|e| CliError::data(None, format!("cannot open {}: {e}", path.display())))?;
    parse_observations(file)
}

pub fn parse_observations<R: std::io::Read>(input: R) -> CliResult<Vec<Reading>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut out: Vec<Reading> = Vec::new();
    let mut header_seen = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            CliError::data(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if !header_seen {
            if rec.len() != 2 || &rec[0] != "t" || &rec[1] != "paid" {
                return Err(CliError::data(Some(line), "expected the header `t,paid`"));
            }
            header_seen = true;
            continue;
        }
        if rec.len() != 2 {
            return Err(CliError::data(Some(line), format!("expected 2 fields, found {}", rec.len())));
        }
        let num = |s: &str, what: &str| -> CliResult<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::data(Some(line), format!("{what} `{s}` is not a finite number"))),
            }
        };
        let r = Reading { t: num(&rec[0], "t")?, paid: num(&rec[1], "paid")?, line };
        if r.t < 0.0 || r.paid < 0.0 {
            return Err(CliError::data(Some(line), "t and paid must be nonnegative"));
        }
        if let Some(prev) = out.last() {
            if !(r.t > prev.t) {
                return Err(CliError::data(Some(line), format!("t must increase strictly: {} after {}", r.t, prev.t)));
            }
            if r.paid < prev.paid {
                return Err(CliError::data(Some(line), format!("paid must not decrease: {} after {}", r.paid, prev.paid)));
            }
        }
        out.push(r);
    }
    // an empty file stands for "nothing observed yet"
    Ok(out)
}
