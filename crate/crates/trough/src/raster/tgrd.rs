//! Flat binary grid format ("TGRD"), used for intermediate artifacts.
//!
//! Little-endian layout, 42-byte header followed by the payload:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "TGRD"
//!      4     2  version, currently 1
//!      6     4  rows (u32)
//!     10     4  cols (u32)
//!     14     4  cell size in millimeters (u32)
//!     18     4  reserved, written as 0
//!     22     8  origin x (f64)
//!     30     8  origin y (f64)
//!     38     4  nodata sentinel (f32)
//!     42  4*n  row-major elevations (f32), n = rows * cols
//! ```
//!
//! Elevations are stored in single precision; writing a grid that holds
//! values outside f32 range is an error, and sub-millimeter cell sizes are
//! not representable.

use std::path::Path;

use super::DemGrid;
use crate::{Error, Result};

const FORMAT: &str = "tgrd";
pub const MAGIC: [u8; 4] = *b"TGRD";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 42;

/// Serialize to the flat binary layout.
pub fn encode_tgrd(grid: &DemGrid) -> Result<Vec<u8>> {
    let rows = u32::try_from(grid.rows())
        .map_err(|_| Error::InvalidParameter("grid rows exceed u32".into()))?;
    let cols = u32::try_from(grid.cols())
        .map_err(|_| Error::InvalidParameter("grid cols exceed u32".into()))?;
    let cell_mm = (grid.cell_size() * 1000.0).round();
    if !(cell_mm >= 1.0) || cell_mm > u32::MAX as f64 {
        return Err(Error::InvalidParameter(format!(
            "cell size {} m is not representable in millimeters",
            grid.cell_size()
        )));
    }

    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.data().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&(cell_mm as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&grid.origin().0.to_le_bytes());
    out.extend_from_slice(&grid.origin().1.to_le_bytes());
    out.extend_from_slice(&(grid.nodata() as f32).to_le_bytes());
    for &v in grid.data() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "elevation {v} does not fit single precision"
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

fn take<const N: usize>(buf: &[u8], offset: usize) -> [u8; N] {
    buf[offset..offset + N].try_into().expect("caller checked length")
}

/// Decode the flat binary layout. Rejects wrong magic, unknown versions,
/// truncated or oversized payloads, and non-finite stored values.
pub fn decode_tgrd(input: &[u8]) -> Result<DemGrid> {
    if input.len() < HEADER_LEN {
        return Err(Error::parse(FORMAT, format!("{} bytes is shorter than the header", input.len())));
    }
    if input[0..4] != MAGIC {
        return Err(Error::parse(FORMAT, format!("bad magic {:02x?}", &input[0..4])));
    }
    let version = u16::from_le_bytes(take::<2>(input, 4));
    if version != VERSION {
        return Err(Error::parse(FORMAT, format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(take::<4>(input, 6)) as usize;
    let cols = u32::from_le_bytes(take::<4>(input, 10)) as usize;
    let cell_mm = u32::from_le_bytes(take::<4>(input, 14));
    let origin_x = f64::from_le_bytes(take::<8>(input, 22));
    let origin_y = f64::from_le_bytes(take::<8>(input, 30));
    let nodata = f32::from_le_bytes(take::<4>(input, 38));

    if rows == 0 || cols == 0 {
        return Err(Error::parse(FORMAT, format!("bad dimensions {rows}x{cols}")));
    }
    if cell_mm == 0 {
        return Err(Error::parse(FORMAT, "zero cell size".to_string()));
    }
    if !origin_x.is_finite() || !origin_y.is_finite() || !nodata.is_finite() {
        return Err(Error::parse(FORMAT, "non-finite header field".to_string()));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::parse(FORMAT, "dimension product overflows".to_string()))?;
    let expected_len = count
        .checked_mul(4)
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::parse(FORMAT, "payload length overflows".to_string()))?;
    if input.len() != expected_len {
        return Err(Error::parse(
            FORMAT,
            format!("file holds {} bytes, header implies {}", input.len(), expected_len),
        ));
    }

    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let f = f32::from_le_bytes(take::<4>(input, HEADER_LEN + 4 * i));
        if !f.is_finite() {
            return Err(Error::parse(FORMAT, format!("non-finite elevation at index {i}")));
        }
        data.push(f as f64);
    }
    DemGrid::from_data(rows, cols, cell_mm as f64 / 1000.0, (origin_x, origin_y), nodata as f64, data)
}

/// Load the flat binary format from a file.
pub fn load_tgrd(path: &Path) -> Result<DemGrid> {
    decode_tgrd(&std::fs::read(path)?)
}

/// Write the flat binary format to a file.
pub fn save_tgrd(grid: &DemGrid, path: &Path) -> Result<()> {
    std::fs::write(path, encode_tgrd(grid)?)?;
    Ok(())
}
