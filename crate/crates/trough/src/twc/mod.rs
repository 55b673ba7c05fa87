//! Stage 2: cross-section waveform comparison.
//!
//! Each candidate raster is decomposed into a sequence of elevation
//! profiles sliced perpendicular to its fitted axis. Candidates are then
//! ranked by bidirectional derivative dynamic time warping against the
//! reference sequence, and only the best survive into the next stage.

mod ddtw;

pub use ddtw::{bidirectional_ddtw, ddtw_cost, slice_derivative};

use crate::raster::DemGrid;
use crate::ssc::ValleyCandidate;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Parameters for the waveform comparison stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwcConfig {
    /// Sample points per cross-section slice.
    pub width: usize,
    /// Distance between consecutive slices along the axis, meters.
    /// Defaults to one cell of the raster being sliced.
    pub spacing_m: Option<f64>,
}

impl Default for TwcConfig {
    fn default() -> Self {
        Self { width: 38, spacing_m: None }
    }
}

impl TwcConfig {
    /// Along-axis spacing to use for `grid`, meters.
    pub fn spacing_for(&self, grid: &DemGrid) -> f64 {
        self.spacing_m.unwrap_or_else(|| grid.cell_size())
    }
}

/// An ordered run of fixed-width elevation profiles taken across a valley.
///
/// Slices are ordered along the fitted axis and share `slice_width`
/// sample points. `along_spacing` is the distance between consecutive
/// stations in meters; dropped slices leave gaps that the spacing does
/// not record.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSequence {
    slices: Vec<Vec<f64>>,
    slice_width: usize,
    along_spacing: f64,
}

impl SliceSequence {
    /// Bundle pre-built slices. All must have `slice_width` samples and
    /// the list must be non-empty.
    pub fn from_slices(slices: Vec<Vec<f64>>, slice_width: usize, along_spacing: f64) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::Degenerate("slice sequence must be non-empty".into()));
        }
        if let Some(bad) = slices.iter().find(|s| s.len() != slice_width) {
            return Err(Error::DimensionMismatch(format!(
                "slice has {} samples, expected {}",
                bad.len(),
                slice_width
            )));
        }
        Ok(Self { slices, slice_width, along_spacing })
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice_width(&self) -> usize {
        self.slice_width
    }

    pub fn along_spacing(&self) -> f64 {
        self.along_spacing
    }

    /// The same slices in reverse along-axis order.
    pub fn reversed(&self) -> Self {
        let mut slices = self.slices.clone();
        slices.reverse();
        Self { slices, slice_width: self.slice_width, along_spacing: self.along_spacing }
    }
}

/// Decompose a candidate into cross-section slices.
///
/// Stations step every `spacing_m` meters along the fitted axis, out to
/// half the fitted length on each side of the centroid. At each station
/// the elevation is sampled at `width` equidistant points along the
/// perpendicular, spanning the station's symmetric clear distance to the
/// raster edge, via bilinear interpolation. The raster rectangle must
/// project to at least `width` pixels across the normal direction so the
/// points sample rather than upscale. A slice that touches nodata or
/// leaves the raster is dropped whole.
///
/// The fit is interpreted in the source tile's pixel frame and shifted
/// into the clipped raster by the candidate bounds, matching how
/// detection produced it.
pub fn slice_decompose(cand: &ValleyCandidate, width: usize, spacing_m: f64) -> Result<SliceSequence> {
    let grid = &cand.raster;
    if width < 2 {
        return Err(Error::InvalidParameter(format!("slice width {width} must be at least 2")));
    }
    if !spacing_m.is_finite() || spacing_m <= 0.0 {
        return Err(Error::InvalidParameter(format!("slice spacing {spacing_m} must be positive")));
    }
    let cell = grid.cell_size();
    let (ux, uy) = cand.fit.dir;
    let (nx, ny) = (-uy, ux);
    let cx = cand.fit.centroid.0 - cand.bounds.col_min as f64;
    let cy = cand.fit.centroid.1 - cand.bounds.row_min as f64;

    let normal_span = (grid.cols() - 1) as f64 * nx.abs() + (grid.rows() - 1) as f64 * ny.abs();
    if normal_span + 1.0 < width as f64 {
        return Err(Error::Degenerate(format!(
            "raster spans {:.1} px across the axis normal, too narrow for a {width}-point slice",
            normal_span + 1.0
        )));
    }

    let step_px = spacing_m / cell;
    let reach = (cand.fit.length_px / 2.0 / step_px).floor() as i64;
    let col_max = (grid.cols() - 1) as f64;
    let row_max = (grid.rows() - 1) as f64;

    let mut slices = Vec::new();
    'station: for t in -reach..=reach {
        let px = snap_to_edge(cx + t as f64 * step_px * ux, grid.cols());
        let py = snap_to_edge(cy + t as f64 * step_px * uy, grid.rows());
        if px < 0.0 || px > col_max || py < 0.0 || py > row_max {
            continue;
        }
        let span = clear_distance(grid, px, py, nx, ny).min(clear_distance(grid, px, py, -nx, -ny));
        if span <= 0.0 {
            continue;
        }
        let ds = 2.0 * span / (width - 1) as f64;
        let mut slice = Vec::with_capacity(width);
        for j in 0..width {
            let s = -span + j as f64 * ds;
            let col = snap_to_edge(px + s * nx, grid.cols());
            let row = snap_to_edge(py + s * ny, grid.rows());
            match grid.sample_bilinear(row, col) {
                Some(z) => slice.push(z),
                None => continue 'station,
            }
        }
        slices.push(slice);
    }

    if slices.is_empty() {
        return Err(Error::Degenerate(format!(
            "candidate {} produced no usable cross-section slices",
            cand.id
        )));
    }
    Ok(SliceSequence { slices, slice_width: width, along_spacing: spacing_m })
}

/// Distance from `(cx, cy)` to the raster boundary along `(dx, dy)`,
/// in pixels. The direction need not be normalized beyond unit length;
/// a zero component never limits the ray.
fn clear_distance(grid: &DemGrid, cx: f64, cy: f64, dx: f64, dy: f64) -> f64 {
    let limit = |pos: f64, d: f64, max: f64| -> f64 {
        if d > 1e-12 {
            (max - pos) / d
        } else if d < -1e-12 {
            -pos / d
        } else {
            f64::INFINITY
        }
    };
    let tx = limit(cx, dx, (grid.cols() - 1) as f64);
    let ty = limit(cy, dy, (grid.rows() - 1) as f64);
    tx.min(ty).max(0.0)
}

/// Pull coordinates that overshoot the valid sample domain by floating
/// point dust back onto the edge; anything further out is left alone so
/// the sampler can reject it.
fn snap_to_edge(v: f64, dim: usize) -> f64 {
    let max = (dim - 1) as f64;
    if v < 0.0 && v > -1e-9 {
        0.0
    } else if v > max && v < max + 1e-9 {
        max
    } else {
        v
    }
}

/// One candidate's warping costs against the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TwcScore {
    pub id: usize,
    /// Cost with the candidate's native along-axis orientation.
    pub forward: f64,
    /// Cost with the candidate's slice order reversed.
    pub reverse: f64,
}

impl TwcScore {
    /// The orientation-free cost used for ranking.
    pub fn cost(&self) -> f64 {
        self.forward.min(self.reverse)
    }
}

/// Ranked survivors of the waveform stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TwcRanking {
    /// Ascending by cost, ties by candidate id, truncated to the keep count.
    pub scores: Vec<TwcScore>,
    /// Ids of candidates that could not be decomposed or scored.
    pub skipped: Vec<usize>,
}

/// Score every candidate against the reference sequence and keep the
/// cheapest `keep`.
///
/// Candidates whose rasters cannot produce a comparable slice sequence
/// (too narrow, swallowed by nodata, fewer than three slices) are set
/// aside rather than failing the stage.
pub fn twc_filter(
    candidates: &[ValleyCandidate],
    reference: &SliceSequence,
    cfg: &TwcConfig,
    keep: usize,
) -> Result<TwcRanking> {
    if keep == 0 {
        return Err(Error::InvalidParameter("keep count must be at least 1".into()));
    }
    if reference.slice_width() != cfg.width {
        return Err(Error::DimensionMismatch(format!(
            "reference slices have {} points, config asks for {}",
            reference.slice_width(),
            cfg.width
        )));
    }

    let outcomes: Vec<(usize, Option<TwcScore>)> = candidates
        .par_iter()
        .map(|cand| {
            let spacing = cfg.spacing_for(&cand.raster);
            let scored = slice_decompose(cand, cfg.width, spacing).and_then(|seq| {
                let forward = ddtw_cost(&seq, reference)?;
                let reverse = ddtw_cost(&seq.reversed(), reference)?;
                Ok(TwcScore { id: cand.id, forward, reverse })
            });
            (cand.id, scored.ok())
        })
        .collect();

    let mut scores = Vec::new();
    let mut skipped = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Some(score) => scores.push(score),
            None => skipped.push(id),
        }
    }
    scores.sort_by(|a, b| a.cost().total_cmp(&b.cost()).then(a.id.cmp(&b.id)));
    scores.truncate(keep);
    Ok(TwcRanking { scores, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{BoundingBox, DemGrid, DEFAULT_NODATA};
    use crate::ssc::LineFit;

    fn column_valley(rows: usize, cols: usize, profile: impl Fn(f64) -> f64) -> DemGrid {
        let data: Vec<f64> = (0..rows * cols).map(|i| profile((i % cols) as f64)).collect();
        DemGrid::from_data(rows, cols, 30.0, (0.0, 0.0), DEFAULT_NODATA, data).unwrap()
    }

    fn vertical_axis_candidate(grid: DemGrid, center_col: f64, row_lo: f64, row_hi: f64) -> ValleyCandidate {
        let rows = grid.rows();
        let cols = grid.cols();
        ValleyCandidate {
            id: 0,
            source_tile: "t".into(),
            bounds: BoundingBox::new(0, rows - 1, 0, cols - 1),
            fit: LineFit {
                slope: f64::INFINITY,
                intercept: f64::NAN,
                dir: (0.0, 1.0),
                centroid: (center_col, (row_lo + row_hi) / 2.0),
                length_px: row_hi - row_lo,
                mse: 0.0,
            },
            raster: grid,
        }
    }

    #[test]
    fn axis_uniform_valley_gives_identical_slices() {
        let grid = column_valley(61, 81, |c| 4000.0 + 3.0 * (c - 40.0).abs());
        let cand = vertical_axis_candidate(grid, 40.0, 10.0, 50.0);
        let seq = slice_decompose(&cand, 38, 30.0).unwrap();
        assert_eq!(seq.len(), 41);
        assert_eq!(seq.slice_width(), 38);
        for slice in seq.slices() {
            assert_eq!(slice, &seq.slices()[0]);
        }
        let first = &seq.slices()[0];
        assert!(first[0] > first[19], "profile should fall toward the axis");
    }

    #[test]
    fn nodata_row_drops_exactly_that_slice() {
        let mut grid = column_valley(61, 81, |c| 4000.0 + 3.0 * (c - 40.0).abs());
        let nodata = grid.nodata();
        for c in 0..81 {
            grid.set(17, c, nodata);
        }
        let cand = vertical_axis_candidate(grid, 40.0, 10.0, 50.0);
        let seq = slice_decompose(&cand, 38, 30.0).unwrap();
        assert_eq!(seq.len(), 40);
        for slice in seq.slices() {
            assert_eq!(slice, &seq.slices()[0]);
        }
    }

    #[test]
    fn doubling_spacing_halves_station_count() {
        let grid = column_valley(61, 81, |c| 4000.0 + 3.0 * (c - 40.0).abs());
        let cand = vertical_axis_candidate(grid, 40.0, 10.0, 50.0);
        let seq = slice_decompose(&cand, 38, 60.0).unwrap();
        assert_eq!(seq.len(), 21);
    }

    #[test]
    fn v_profile_matches_closed_form_within_bilinear_error() {
        let cell = 30.0;
        let theta = 25f64.to_radians();
        let center = 40.25;
        let grid = column_valley(61, 81, |c| (c - center).abs() * cell * theta.tan());
        let cand = vertical_axis_candidate(grid, center, 10.0, 50.0);
        let seq = slice_decompose(&cand, 38, cell).unwrap();
        assert_eq!(seq.len(), 41);

        let span = center.min(80.0 - center);
        let ds = 2.0 * span / 37.0;
        let tol = cell * theta.tan() + 1e-9;
        for slice in seq.slices() {
            for (j, &z) in slice.iter().enumerate() {
                let s = -span + j as f64 * ds;
                let expected = s.abs() * cell * theta.tan();
                assert!(
                    (z - expected).abs() <= tol,
                    "sample {j}: {z} vs analytic {expected}"
                );
            }
        }
    }

    #[test]
    fn diagonal_axis_keeps_all_stations_and_v_shape() {
        let rows = 101;
        let cols = 101;
        let cell = 30.0;
        let phi = 30f64.to_radians();
        let theta = 25f64.to_radians();
        let (ux, uy) = (phi.cos(), phi.sin());
        let (nx, ny) = (-uy, ux);
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| {
                let r = (i / cols) as f64;
                let c = (i % cols) as f64;
                let perp = (c - 50.0) * nx + (r - 50.0) * ny;
                perp.abs() * cell * theta.tan()
            })
            .collect();
        let grid = DemGrid::from_data(rows, cols, cell, (0.0, 0.0), DEFAULT_NODATA, data).unwrap();
        let cand = ValleyCandidate {
            id: 0,
            source_tile: "t".into(),
            bounds: BoundingBox::new(0, rows - 1, 0, cols - 1),
            fit: LineFit {
                slope: uy / ux,
                intercept: 50.0 - (uy / ux) * 50.0,
                dir: (ux, uy),
                centroid: (50.0, 50.0),
                length_px: 60.0,
                mse: 0.0,
            },
            raster: grid,
        };
        let seq = slice_decompose(&cand, 38, cell).unwrap();
        assert_eq!(seq.len(), 61, "every station crosses the valley inside the raster");

        let sym_tol = 2.0 * cell * theta.tan() + 1e-9;
        for slice in seq.slices() {
            for j in 0..19 {
                let mirrored = slice[37 - j];
                assert!(
                    (slice[j] - mirrored).abs() <= sym_tol,
                    "V symmetry broke at sample {j}: {} vs {mirrored}",
                    slice[j]
                );
            }
            for j in 19..37 {
                assert!(
                    slice[j + 1] >= slice[j] - sym_tol,
                    "V should rise away from the axis at sample {j}"
                );
            }
            let center_min = slice[18].min(slice[19]);
            let rim = slice[0].min(slice[37]);
            assert!(rim > center_min + cell, "rim {rim} should sit well above the floor {center_min}");
        }
    }

    #[test]
    fn narrow_raster_is_rejected() {
        let grid = column_valley(40, 10, |c| 4000.0 - c);
        let cand = vertical_axis_candidate(grid, 5.0, 5.0, 35.0);
        let err = slice_decompose(&cand, 38, 30.0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "got {err:?}");
    }

    #[test]
    fn all_nodata_raster_yields_no_slices_error() {
        let grid = DemGrid::filled(61, 81, 30.0, (0.0, 0.0), DEFAULT_NODATA);
        let cand = vertical_axis_candidate(grid, 40.0, 10.0, 50.0);
        let err = slice_decompose(&cand, 38, 30.0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "got {err:?}");
    }

    #[test]
    fn sequences_validate_width_and_emptiness() {
        assert!(SliceSequence::from_slices(vec![], 3, 30.0).is_err());
        assert!(SliceSequence::from_slices(vec![vec![1.0, 2.0]], 3, 30.0).is_err());
        let seq = SliceSequence::from_slices(vec![vec![1.0, 2.0, 3.0]], 3, 30.0).unwrap();
        assert_eq!(seq.len(), 1);
    }

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_valley_candidate(id: usize, rng: &mut ChaCha8Rng) -> ValleyCandidate {
        let depth = rng.random_range(100.0..400.0);
        let half_width = rng.random_range(5.0..30.0);
        let noise = rng.random_range(2.0..8.0);
        let mut grid = column_valley(61, 81, |c| {
            4000.0 - depth * (1.0 - (c - 40.0).abs() / half_width).max(0.0)
        });
        for r in 0..61 {
            for c in 0..81 {
                let z = grid.get(r, c) + rng.random_range(-noise..noise);
                grid.set(r, c, z);
            }
        }
        let mut cand = vertical_axis_candidate(grid, 40.0, 10.0, 50.0);
        cand.id = id;
        cand
    }

    #[test]
    fn filter_ranks_planted_reference_copy_first() {
        let ref_grid = column_valley(61, 81, |c| 4000.0 - 300.0 * (1.0 - (c - 40.0).abs() / 20.0).max(0.0));
        let ref_cand = vertical_axis_candidate(ref_grid, 40.0, 10.0, 50.0);
        let cfg = TwcConfig::default();
        let reference = slice_decompose(&ref_cand, cfg.width, cfg.spacing_for(&ref_cand.raster)).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut candidates: Vec<ValleyCandidate> = (0..200)
            .map(|id| {
                if id == 57 {
                    let mut planted = ref_cand.clone();
                    planted.id = 57;
                    planted
                } else {
                    noisy_valley_candidate(id, &mut rng)
                }
            })
            .collect();
        candidates.push(vertical_axis_candidate(column_valley(40, 10, |c| 4000.0 - c), 5.0, 5.0, 35.0));
        candidates.last_mut().unwrap().id = 200;

        let ranking = twc_filter(&candidates, &reference, &cfg, 5000).unwrap();
        assert_eq!(ranking.scores.len(), 200, "narrow raster cannot be scored");
        assert_eq!(ranking.skipped, vec![200]);
        assert_eq!(ranking.scores[0].id, 57);
        assert_eq!(ranking.scores[0].cost(), 0.0);
        assert!(ranking.scores[1].cost() > 0.0);

        let again = twc_filter(&candidates, &reference, &cfg, 5000).unwrap();
        assert_eq!(ranking, again);

        let top10 = twc_filter(&candidates, &reference, &cfg, 10).unwrap();
        assert_eq!(top10.scores.len(), 10);
        assert_eq!(top10.scores[0].id, 57);
        assert_eq!(&top10.scores[..], &ranking.scores[..10]);
    }

    #[test]
    fn filter_rejects_zero_keep_and_width_mismatch() {
        let grid = column_valley(61, 81, |c| 4000.0 - c);
        let cand = vertical_axis_candidate(grid, 40.0, 10.0, 50.0);
        let cfg = TwcConfig::default();
        let reference = slice_decompose(&cand, cfg.width, 30.0).unwrap();
        assert!(matches!(
            twc_filter(std::slice::from_ref(&cand), &reference, &cfg, 0),
            Err(Error::InvalidParameter(_))
        ));
        let narrow_cfg = TwcConfig { width: 21, ..TwcConfig::default() };
        assert!(matches!(
            twc_filter(std::slice::from_ref(&cand), &reference, &narrow_cfg, 5),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
