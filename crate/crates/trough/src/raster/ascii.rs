//! Plain-text grid interchange format.
//!
//! A short whitespace-separated header followed by row-major elevation
//! values:
//!
//! ```text
//! ncols        4
//! nrows        3
//! xllcorner    634500.0
//! yllcorner    3995000.0
//! cellsize     30.0
//! NODATA_value -9999
//! 412.1 415.0 ...
//! ```
//!
//! Header keys are case-insensitive and may appear in any order;
//! `NODATA_value` is optional and defaults to -9999. `xllcorner`/`yllcorner`
//! name the outer corner of the lower-left cell in the same linear unit as
//! `cellsize`. Values may be split across lines arbitrarily. The writer
//! emits shortest round-trip float formatting, so write-then-load preserves
//! every value exactly.

use std::path::Path;

use super::{DemGrid, DEFAULT_NODATA};
use crate::{Error, Result};

const FORMAT: &str = "ascii grid";

fn header_value(raw: &str, key: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(FORMAT, format!("header {key} has non-numeric value {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(FORMAT, format!("header {key} is not finite")));
    }
    Ok(v)
}

/// Parse the text format from a byte buffer.
pub fn parse_ascii_grid(input: &[u8]) -> Result<DemGrid> {
    let text = std::str::from_utf8(input)
        .map_err(|_| Error::parse(FORMAT, "input is not valid UTF-8".to_string()))?;
    let mut tokens = text.split_whitespace().peekable();

    let mut ncols: Option<f64> = None;
    let mut nrows: Option<f64> = None;
    let mut xll: Option<f64> = None;
    let mut yll: Option<f64> = None;
    let mut cellsize: Option<f64> = None;
    let mut nodata: Option<f64> = None;

    // Header entries are `key value` pairs; the data section begins at the
    // first token that parses as a number.
    while let Some(&tok) = tokens.peek() {
        if tok.parse::<f64>().is_ok() {
            break;
        }
        let key = tokens.next().expect("peeked token exists");
        let raw = tokens
            .next()
            .ok_or_else(|| Error::parse(FORMAT, format!("header {key} has no value")))?;
        let slot = match key.to_ascii_lowercase().as_str() {
            "ncols" => &mut ncols,
            "nrows" => &mut nrows,
            "xllcorner" => &mut xll,
            "yllcorner" => &mut yll,
            "cellsize" => &mut cellsize,
            "nodata_value" => &mut nodata,
            other => {
                return Err(Error::parse(FORMAT, format!("unknown header key {other:?}")));
            }
        };
        if slot.is_some() {
            return Err(Error::parse(FORMAT, format!("duplicate header key {key:?}")));
        }
        *slot = Some(header_value(raw, key)?);
    }

    let ncols = ncols.ok_or_else(|| Error::parse(FORMAT, "missing header key ncols"))?;
    let nrows = nrows.ok_or_else(|| Error::parse(FORMAT, "missing header key nrows"))?;
    let xll = xll.ok_or_else(|| Error::parse(FORMAT, "missing header key xllcorner"))?;
    let yll = yll.ok_or_else(|| Error::parse(FORMAT, "missing header key yllcorner"))?;
    let cellsize = cellsize.ok_or_else(|| Error::parse(FORMAT, "missing header key cellsize"))?;
    let nodata = nodata.unwrap_or(DEFAULT_NODATA);

    if ncols.fract() != 0.0 || nrows.fract() != 0.0 || ncols < 1.0 || nrows < 1.0 {
        return Err(Error::parse(FORMAT, format!("bad dimensions {nrows} x {ncols}")));
    }
    if ncols > 1e7 || nrows > 1e7 {
        return Err(Error::parse(FORMAT, "dimensions implausibly large".to_string()));
    }
    let cols = ncols as usize;
    let rows = nrows as usize;
    let expected = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::parse(FORMAT, "dimension product overflows".to_string()))?;
    if !(cellsize > 0.0) {
        return Err(Error::parse(FORMAT, format!("cellsize {cellsize} must be positive")));
    }

    let mut data = Vec::new();
    for tok in tokens {
        if data.len() == expected {
            return Err(Error::parse(
                FORMAT,
                format!("more than {expected} elevation values present"),
            ));
        }
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::parse(FORMAT, format!("non-numeric elevation {tok:?}")))?;
        if !v.is_finite() {
            return Err(Error::parse(FORMAT, format!("non-finite elevation {tok:?}")));
        }
        data.push(v);
    }
    if data.len() != expected {
        return Err(Error::parse(
            FORMAT,
            format!("expected {expected} elevation values, found {}", data.len()),
        ));
    }

    let origin = (xll, yll + nrows * cellsize);
    DemGrid::from_data(rows, cols, cellsize, origin, nodata, data)
}

/// Serialize to the text format.
pub fn write_ascii_grid(grid: &DemGrid) -> String {
    let (x, y) = grid.origin();
    let yll = y - grid.rows() as f64 * grid.cell_size();
    let mut out = String::new();
    out.push_str(&format!("ncols {}\n", grid.cols()));
    out.push_str(&format!("nrows {}\n", grid.rows()));
    out.push_str(&format!("xllcorner {}\n", x));
    out.push_str(&format!("yllcorner {}\n", yll));
    out.push_str(&format!("cellsize {}\n", grid.cell_size()));
    out.push_str(&format!("NODATA_value {}\n", grid.nodata()));
    for r in 0..grid.rows() {
        let row = &grid.data()[r * grid.cols()..(r + 1) * grid.cols()];
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Load the text format from a file.
pub fn load_ascii_grid(path: &Path) -> Result<DemGrid> {
    parse_ascii_grid(&std::fs::read(path)?)
}

/// Write the text format to a file.
pub fn save_ascii_grid(grid: &DemGrid, path: &Path) -> Result<()> {
    std::fs::write(path, write_ascii_grid(grid))?;
    Ok(())
}
