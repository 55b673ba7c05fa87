//! Local-depression binarization.
//!
//! A cell is marked when it sits at least `threshold` meters below the mean
//! elevation of its surrounding `block` x `block` window. Windows are
//! truncated at the grid edge, and nodata cells neither contribute to the
//! window mean nor get marked themselves. The window sums come from a
//! summed-area table, so the scan is linear in grid size for any block.

use super::BinaryMask;
use crate::raster::DemGrid;
use crate::{Error, Result};

/// Mark cells lying `threshold` meters under their local window mean.
///
/// `block` must be odd and at least 3; `threshold` must be positive.
pub fn ledb_binarize(grid: &DemGrid, block: usize, threshold: f64) -> Result<BinaryMask> {
    if block < 3 || block % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "block {block} must be odd and at least 3"
        )));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "depth threshold {threshold} must be positive"
        )));
    }

    let (rows, cols) = (grid.rows(), grid.cols());
    // Summed-area tables over values (nodata as 0) and valid-cell counts,
    // with a zero border row/column.
    let stride = cols + 1;
    let mut sum = vec![0.0f64; (rows + 1) * stride];
    let mut cnt = vec![0u32; (rows + 1) * stride];
    for r in 0..rows {
        for c in 0..cols {
            let (v, k) = if grid.is_nodata(r, c) { (0.0, 0) } else { (grid.get(r, c), 1) };
            let i = (r + 1) * stride + (c + 1);
            sum[i] = v + sum[i - 1] + sum[i - stride] - sum[i - stride - 1];
            cnt[i] = k + cnt[i - 1] + cnt[i - stride] - cnt[i - stride - 1];
        }
    }

    let half = (block / 2) as isize;
    let mut mask = BinaryMask::new(rows, cols);
    for r in 0..rows {
        let r0 = (r as isize - half).max(0) as usize;
        let r1 = ((r as isize + half) as usize).min(rows - 1);
        for c in 0..cols {
            if grid.is_nodata(r, c) {
                continue;
            }
            let c0 = (c as isize - half).max(0) as usize;
            let c1 = ((c as isize + half) as usize).min(cols - 1);
            let a = r0 * stride + c0;
            let b = r0 * stride + (c1 + 1);
            let d = (r1 + 1) * stride + c0;
            let e = (r1 + 1) * stride + (c1 + 1);
            let n = (cnt[e] + cnt[a]) - (cnt[b] + cnt[d]);
            if n == 0 {
                continue;
            }
            let s = sum[e] - sum[b] - sum[d] + sum[a];
            let mean = s / n as f64;
            mask.set(r, c, grid.get(r, c) < mean - threshold);
        }
    }
    Ok(mask)
}
