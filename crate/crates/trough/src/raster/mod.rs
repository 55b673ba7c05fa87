//! Elevation rasters and their on-disk forms.
//!
//! A [`DemGrid`] is a dense row-major grid of elevations in meters with a
//! square cell size and an upper-left origin. Horizontal coordinates live in
//! whatever planar frame the source corpus uses; the stages only require that
//! all grids of one corpus share that frame, so origin math is plain
//! `offset * cell_size` arithmetic with no datum handling.
//!
//! Two serializations are supported: a plain-text grid with a small
//! key/value header ([`ascii`]) for interchange, and a compact flat binary
//! layout ([`tgrd`]) used for intermediate artifacts. [`synth`] generates
//! deterministic synthetic terrain for tests and benchmarks.

pub mod ascii;
pub mod synth;
pub mod tgrd;

use crate::{Error, Result};

/// Default nodata sentinel, matching the common convention of elevation
/// distributions.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// Inclusive pixel rectangle inside a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BoundingBox {
    pub fn new(row_min: usize, row_max: usize, col_min: usize, col_max: usize) -> Self {
        BoundingBox { row_min, row_max, col_min, col_max }
    }

    pub fn rows(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn cols(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn area(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Grow by `margin` pixels on every side, clamped to `rows` x `cols`.
    pub fn expanded(&self, margin: usize, rows: usize, cols: usize) -> BoundingBox {
        BoundingBox {
            row_min: self.row_min.saturating_sub(margin),
            row_max: (self.row_max + margin).min(rows - 1),
            col_min: self.col_min.saturating_sub(margin),
            col_max: (self.col_max + margin).min(cols - 1),
        }
    }

    /// Pixel count of the intersection with `other`, 0 when disjoint.
    pub fn intersection_area(&self, other: &BoundingBox) -> usize {
        let r0 = self.row_min.max(other.row_min);
        let r1 = self.row_max.min(other.row_max);
        let c0 = self.col_min.max(other.col_min);
        let c1 = self.col_max.min(other.col_max);
        if r1 < r0 || c1 < c0 {
            0
        } else {
            (r1 - r0 + 1) * (c1 - c0 + 1)
        }
    }

    /// Intersection over union of two pixel rectangles.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }

    /// The same rectangle shifted by a global offset, for comparing boxes
    /// that come from different tiles of one mosaic lattice.
    pub fn offset_by(&self, row_off: usize, col_off: usize) -> BoundingBox {
        BoundingBox {
            row_min: self.row_min + row_off,
            row_max: self.row_max + row_off,
            col_min: self.col_min + col_off,
            col_max: self.col_max + col_off,
        }
    }
}

/// Dense single-band elevation grid.
///
/// `origin` is the outer corner of the upper-left cell, `(x, y)` with `x`
/// growing east and `y` growing north; row indices grow southward. Cells
/// whose value equals `nodata` are holes.
#[derive(Debug, Clone, PartialEq)]
pub struct DemGrid {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: (f64, f64),
    nodata: f64,
    data: Vec<f64>,
}

impl DemGrid {
    /// Build a grid from row-major values.
    pub fn from_data(
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin: (f64, f64),
        nodata: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("grid dimensions must be positive".into()));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidParameter(format!("cell size {cell_size} must be positive")));
        }
        if !nodata.is_finite() {
            return Err(Error::InvalidParameter("nodata sentinel must be finite".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "grid {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DemGrid { rows, cols, cell_size, origin, nodata, data })
    }

    /// Grid of constant `value`.
    pub fn filled(rows: usize, cols: usize, cell_size: f64, origin: (f64, f64), value: f64) -> Self {
        DemGrid::from_data(rows, cols, cell_size, origin, DEFAULT_NODATA, vec![value; rows * cols])
            .expect("constant grid construction cannot fail for positive dims")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn is_nodata(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == self.nodata
    }

    /// Smallest and largest valid elevation, `None` when every cell is nodata.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for &v in &self.data {
            if v == self.nodata {
                continue;
            }
            range = Some(match range {
                None => (v, v),
                Some((lo, hi)) => (lo.min(v), hi.max(v)),
            });
        }
        range
    }

    /// Bilinear interpolation at fractional pixel coordinates (`row`, `col`
    /// measured in cell units from the upper-left cell center). Returns
    /// `None` outside the grid or when any of the four support cells is
    /// nodata.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> Option<f64> {
        if !row.is_finite() || !col.is_finite() || row < 0.0 || col < 0.0 {
            return None;
        }
        let r0 = row.floor() as usize;
        let c0 = col.floor() as usize;
        if r0 + 1 > self.rows - 1 && row > (self.rows - 1) as f64 {
            return None;
        }
        if c0 + 1 > self.cols - 1 && col > (self.cols - 1) as f64 {
            return None;
        }
        let fr = row - r0 as f64;
        let fc = col - c0 as f64;
        // Corners with zero weight are not part of the support.
        let r1 = if fr == 0.0 { r0 } else { (r0 + 1).min(self.rows - 1) };
        let c1 = if fc == 0.0 { c0 } else { (c0 + 1).min(self.cols - 1) };
        let corners = [self.get(r0, c0), self.get(r0, c1), self.get(r1, c0), self.get(r1, c1)];
        if corners.iter().any(|&v| v == self.nodata) {
            return None;
        }
        let top = corners[0] * (1.0 - fc) + corners[1] * fc;
        let bot = corners[2] * (1.0 - fc) + corners[3] * fc;
        Some(top * (1.0 - fr) + bot * fr)
    }

    /// Copy out the inclusive pixel rectangle `bounds` as a new grid. The
    /// origin shifts by the box offset times the cell size.
    pub fn crop(&self, bounds: &BoundingBox) -> Result<DemGrid> {
        if bounds.row_min > bounds.row_max || bounds.col_min > bounds.col_max {
            return Err(Error::InvalidParameter(format!("inverted bounding box {bounds:?}")));
        }
        if bounds.row_max >= self.rows || bounds.col_max >= self.cols {
            return Err(Error::OutOfBounds(format!(
                "box {bounds:?} exceeds grid {}x{}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(bounds.area());
        for r in bounds.row_min..=bounds.row_max {
            let start = r * self.cols + bounds.col_min;
            data.extend_from_slice(&self.data[start..start + bounds.cols()]);
        }
        DemGrid::from_data(
            bounds.rows(),
            bounds.cols(),
            self.cell_size,
            (
                self.origin.0 + bounds.col_min as f64 * self.cell_size,
                self.origin.1 - bounds.row_min as f64 * self.cell_size,
            ),
            self.nodata,
            data,
        )
    }
}

/// Stitch a 2x2 arrangement of equally sized grids that share their border
/// row/column, the layout used by adjacent survey granules. `quad[0]` is the
/// northern row. Missing members are filled with nodata so a partially
/// covered arrangement still yields a full mosaic; at least one member must
/// be present.
///
/// The output is `(2R-1) x (2C-1)`: the duplicated seam row and column are
/// counted once.
pub fn mosaic_tiles(quad: [[Option<&DemGrid>; 2]; 2]) -> Result<DemGrid> {
    let first = quad
        .iter()
        .flatten()
        .flatten()
        .next()
        .ok_or_else(|| Error::InvalidParameter("mosaic of four empty slots".into()))?;
    let (rows, cols) = (first.rows, first.cols);
    let (cell, nodata) = (first.cell_size, first.nodata);
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidParameter("mosaic members must be at least 2x2".into()));
    }
    for g in quad.iter().flatten().flatten() {
        if g.rows != rows || g.cols != cols {
            return Err(Error::DimensionMismatch(format!(
                "mosaic members disagree: {}x{} vs {rows}x{cols}",
                g.rows, g.cols
            )));
        }
        if g.cell_size != cell {
            return Err(Error::DimensionMismatch(format!(
                "mosaic cell sizes disagree: {} vs {cell}",
                g.cell_size
            )));
        }
        if g.nodata != nodata {
            return Err(Error::DimensionMismatch("mosaic nodata sentinels disagree".into()));
        }
    }

    // Every present member implies where the arrangement's upper-left corner
    // sits; they must all agree. Seam sharing means neighbors are offset by
    // one cell less than the full extent.
    let dx = (cols - 1) as f64 * cell;
    let dy = (rows - 1) as f64 * cell;
    let tol = 1e-6 * cell;
    let mut origin: Option<(f64, f64)> = None;
    for (sr, band) in quad.iter().enumerate() {
        for (sc, member) in band.iter().enumerate() {
            let Some(g) = member else { continue };
            let implied = (g.origin.0 - sc as f64 * dx, g.origin.1 + sr as f64 * dy);
            match origin {
                None => origin = Some(implied),
                Some(o) => {
                    if (o.0 - implied.0).abs() > tol || (o.1 - implied.1).abs() > tol {
                        return Err(Error::InvalidParameter(format!(
                            "geographically inconsistent mosaic origins: slot ({sr},{sc}) implies {implied:?}, expected {o:?}"
                        )));
                    }
                }
            }
        }
    }
    let origin = origin.expect("at least one member present");

    let out_rows = 2 * rows - 1;
    let out_cols = 2 * cols - 1;
    let mut out = DemGrid::from_data(
        out_rows,
        out_cols,
        cell,
        origin,
        nodata,
        vec![nodata; out_rows * out_cols],
    )?;
    for (sr, band) in quad.iter().enumerate() {
        for (sc, member) in band.iter().enumerate() {
            let Some(g) = member else { continue };
            let r_off = sr * (rows - 1);
            let c_off = sc * (cols - 1);
            for r in 0..rows {
                for c in 0..cols {
                    out.set(r + r_off, c + c_off, g.get(r, c));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numbered(rows: usize, cols: usize, origin: (f64, f64)) -> DemGrid {
        let data = (0..rows * cols).map(|i| i as f64).collect();
        DemGrid::from_data(rows, cols, 30.0, origin, DEFAULT_NODATA, data).unwrap()
    }

    #[test]
    fn crop_extracts_subgrid_and_shifts_origin() {
        let g = numbered(4, 5, (1000.0, 2000.0));
        let sub = g.crop(&BoundingBox::new(1, 2, 2, 4)).unwrap();
        assert_eq!(sub.rows(), 2);
        assert_eq!(sub.cols(), 3);
        assert_eq!(sub.get(0, 0), g.get(1, 2));
        assert_eq!(sub.get(1, 2), g.get(2, 4));
        assert_eq!(sub.origin(), (1000.0 + 2.0 * 30.0, 2000.0 - 1.0 * 30.0));
    }

    #[test]
    fn crop_rejects_out_of_bounds_box() {
        let g = numbered(4, 5, (0.0, 0.0));
        let err = g.crop(&BoundingBox::new(0, 4, 0, 2)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds(_)), "got {err:?}");
    }

    #[test]
    fn mosaic_of_quadrant_zeros_dedups_seams() {
        let mk = |origin| {
            DemGrid::from_data(2, 2, 30.0, origin, DEFAULT_NODATA, vec![0.0; 4]).unwrap()
        };
        // Seam-sharing neighbors sit one cell less than the full extent apart.
        let tl = mk((0.0, 0.0));
        let tr = mk((30.0, 0.0));
        let bl = mk((0.0, -30.0));
        let br = mk((30.0, -30.0));
        let m = mosaic_tiles([[Some(&tl), Some(&tr)], [Some(&bl), Some(&br)]]).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 3));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mosaic_missing_member_becomes_nodata() {
        let tl = DemGrid::filled(3, 3, 10.0, (0.0, 0.0), 7.0);
        let m = mosaic_tiles([[Some(&tl), None], [None, None]]).unwrap();
        assert_eq!((m.rows(), m.cols()), (5, 5));
        assert_eq!(m.get(0, 0), 7.0);
        assert_eq!(m.get(2, 2), 7.0);
        assert!(m.is_nodata(0, 3), "uncovered area must be flagged");
        assert!(m.is_nodata(4, 4));
    }

    #[test]
    fn mosaic_rejects_mixed_resolutions() {
        let a = DemGrid::filled(3, 3, 10.0, (0.0, 0.0), 0.0);
        let b = DemGrid::filled(3, 3, 20.0, (20.0, 0.0), 0.0);
        let err = mosaic_tiles([[Some(&a), Some(&b)], [None, None]]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)), "got {err:?}");
    }

    #[test]
    fn mosaic_rejects_swapped_arrangement() {
        let a = DemGrid::filled(3, 3, 10.0, (0.0, 0.0), 0.0);
        let b = DemGrid::filled(3, 3, 10.0, (20.0, 0.0), 0.0);
        // b is east of a but placed in the western slot.
        let err = mosaic_tiles([[Some(&b), Some(&a)], [None, None]]).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)), "got {err:?}");
    }

    #[test]
    fn bilinear_sample_matches_hand_interpolation() {
        let g = DemGrid::from_data(
            2,
            2,
            1.0,
            (0.0, 0.0),
            DEFAULT_NODATA,
            vec![0.0, 10.0, 20.0, 30.0],
        )
        .unwrap();
        let v = g.sample_bilinear(0.5, 0.5).unwrap();
        assert!((v - 15.0).abs() < 1e-12);
        assert_eq!(g.sample_bilinear(0.0, 1.0), Some(10.0));
        assert_eq!(g.sample_bilinear(-0.1, 0.0), None);
        assert_eq!(g.sample_bilinear(0.0, 1.01), None);
    }

    #[test]
    fn bilinear_sample_refuses_nodata_support() {
        let mut g = DemGrid::filled(2, 2, 1.0, (0.0, 0.0), 5.0);
        g.set(1, 1, DEFAULT_NODATA);
        assert_eq!(g.sample_bilinear(0.5, 0.5), None);
        assert_eq!(g.sample_bilinear(0.0, 0.0), Some(5.0));
    }

    #[test]
    fn iou_of_identical_boxes_is_one() {
        let b = BoundingBox::new(2, 10, 3, 12);
        assert_eq!(b.iou(&b), 1.0);
        let far = BoundingBox::new(50, 60, 50, 60);
        assert_eq!(b.iou(&far), 0.0);
    }
}
