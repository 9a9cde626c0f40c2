//! Number formatting and CSV reading shared by the trace and schedule files.

use crate::error::{Error, Result};

/// Formats `x` with 17 significant digits, which round-trips any `f64`.
pub fn sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

/// Parses `text` as CSV whose header must equal `header`. Returns each
/// record with its 1-based line number.
pub fn read_csv(text: &str, header: &str) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bad_header = || Error::Parse {
        line: 1,
        message: format!("expected header `{header}`"),
    };
    let found = r.headers().map_err(|_| bad_header())?;
    if found.iter().ne(header.split(',')) {
        return Err(bad_header());
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec));
    }
    Ok(out)
}
