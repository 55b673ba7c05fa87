//! Straight-segment candidate scan.
//!
//! The coarse stage walks every corpus tile and emits clipped rasters of
//! valley-like straight segments:
//!
//! 1. [`ledb::ledb_binarize`] marks cells sitting well below their local
//!    neighborhood mean,
//! 2. [`thin::zhang_suen_thin`] reduces the mask to 1-pixel skeletons,
//! 3. [`components::connected_components`] splits the skeleton into
//!    8-connected pieces,
//! 4. [`linefit::fit_skeleton_line`] fits a total-least-squares line to each
//!    piece, and
//! 5. [`select_and_clip`] keeps pieces that are straight enough and of
//!    plausible valley length, clipping each to its padded bounding box.
//!
//! Candidates from overlapping tiles are merged by [`dedup_candidates`],
//! which drops the worse-fitting member of any pair whose footprints overlap
//! by more than 80%.

pub mod components;
pub mod ledb;
pub mod linefit;
pub mod store;
pub mod thin;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::raster::{BoundingBox, DemGrid};
use crate::{Error, Result};
pub use components::{connected_components, PixelComponent};
pub use ledb::ledb_binarize;
pub use linefit::{fit_skeleton_line, LineFit};
pub use store::{load_candidates, parse_candidate_table, save_candidates, CandidateMeta};
pub use thin::zhang_suen_thin;

/// Dense binary raster mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        BinaryMask { rows, cols, bits: vec![false; rows * cols] }
    }

    /// Build from `#` (set) and `.` (clear) rows; handy in tests.
    pub fn from_art(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut mask = BinaryMask::new(height, width);
        for (r, line) in rows.iter().enumerate() {
            assert_eq!(line.len(), width, "ragged mask art");
            for (c, ch) in line.chars().enumerate() {
                mask.set(r, c, ch == '#');
            }
        }
        mask
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    /// Out-of-bounds coordinates read as clear.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            false
        } else {
            self.get(row as usize, col as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Tuning of the candidate scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SscConfig {
    /// Side of the square neighborhood used for the local mean, pixels; odd.
    pub block: usize,
    /// A cell must sit at least this far below the local mean, meters.
    pub depth_threshold_m: f64,
    /// Largest acceptable mean squared perpendicular deviation from the
    /// fitted line, square pixels.
    pub mse_max: f64,
    /// Acceptable fitted-segment length range, meters.
    pub min_length_m: f64,
    pub max_length_m: f64,
    /// Padding added around a skeleton's bounding box when clipping, pixels.
    pub margin: usize,
}

impl Default for SscConfig {
    fn default() -> Self {
        SscConfig {
            block: 33,
            depth_threshold_m: 50.0,
            mse_max: 2.0,
            min_length_m: 5_000.0,
            max_length_m: 40_000.0,
            margin: 15,
        }
    }
}

/// A clipped straight-valley candidate. `fit` and `bounds` are in the pixel
/// frame of the source tile; `raster` is the tile cropped to `bounds`.
#[derive(Debug, Clone)]
pub struct ValleyCandidate {
    pub id: usize,
    pub source_tile: String,
    pub bounds: BoundingBox,
    pub fit: LineFit,
    pub raster: DemGrid,
}

/// Filter fitted skeleton pieces and clip a padded raster for each survivor.
///
/// `pieces` pairs each component with its line fit. Survivors satisfy
/// `fit.mse <= cfg.mse_max` and a fitted length within the configured range
/// (converted to pixels by rounding). Candidate ids number survivors in
/// input order starting at 0.
pub fn select_and_clip(
    tile: &DemGrid,
    tile_id: &str,
    pieces: &[(PixelComponent, LineFit)],
    cfg: &SscConfig,
) -> Result<Vec<ValleyCandidate>> {
    let len_lo = (cfg.min_length_m / tile.cell_size()).round();
    let len_hi = (cfg.max_length_m / tile.cell_size()).round();
    if len_lo > len_hi {
        return Err(Error::InvalidParameter(format!(
            "length range {} - {} m is inverted",
            cfg.min_length_m, cfg.max_length_m
        )));
    }
    let mut out = Vec::new();
    for (component, fit) in pieces {
        if fit.mse > cfg.mse_max || fit.length_px < len_lo || fit.length_px > len_hi {
            continue;
        }
        let bounds = component.bounding_box().expanded(cfg.margin, tile.rows(), tile.cols());
        let raster = tile.crop(&bounds)?;
        out.push(ValleyCandidate {
            id: out.len(),
            source_tile: tile_id.to_string(),
            bounds,
            fit: fit.clone(),
            raster,
        });
    }
    Ok(out)
}

/// Run the whole per-tile scan: binarize, thin, split, fit, select.
/// Components too small to carry a line fit (fewer than 2 pixels) are
/// dropped silently.
pub fn detect_candidates(
    tile: &DemGrid,
    tile_id: &str,
    cfg: &SscConfig,
) -> Result<Vec<ValleyCandidate>> {
    let mask = ledb::ledb_binarize(tile, cfg.block, cfg.depth_threshold_m)?;
    let skeleton = thin::zhang_suen_thin(&mask);
    let pieces: Vec<(PixelComponent, LineFit)> = components::connected_components(&skeleton)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| {
            let fit = linefit::fit_skeleton_line(c.pixels()).expect("component has >= 2 pixels");
            (c, fit)
        })
        .collect();
    select_and_clip(tile, tile_id, &pieces, cfg)
}

/// Merge candidates whose global footprints overlap by IoU > 0.8, keeping
/// the lower-mse member (ties keep the earlier id). Each candidate comes
/// with its bounding box expressed on the corpus-wide pixel lattice so that
/// detections of one valley made from two overlapping tiles line up.
pub fn dedup_candidates(
    candidates: Vec<(ValleyCandidate, BoundingBox)>,
) -> Vec<ValleyCandidate> {
    const IOU_LIMIT: f64 = 0.8;
    // Coarse spatial hash; IoU > 0.8 needs nearly coincident boxes, so only
    // near neighbors are ever compared.
    const HASH_CELL: usize = 1024;

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a].0, &candidates[b].0);
        ca.fit.mse.total_cmp(&cb.fit.mse).then(ca.id.cmp(&cb.id))
    });

    let mut kept: Vec<usize> = Vec::new();
    let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let cells_of = |b: &BoundingBox| {
        let r0 = b.row_min / HASH_CELL;
        let r1 = b.row_max / HASH_CELL;
        let c0 = b.col_min / HASH_CELL;
        let c1 = b.col_max / HASH_CELL;
        (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| (r, c)))
    };

    for idx in order {
        let global = &candidates[idx].1;
        let mut duplicate = false;
        'scan: for cell in cells_of(global) {
            if let Some(members) = buckets.get(&cell) {
                for &other in members {
                    if global.iou(&candidates[other].1) > IOU_LIMIT {
                        duplicate = true;
                        break 'scan;
                    }
                }
            }
        }
        if !duplicate {
            for cell in cells_of(global) {
                buckets.entry(cell).or_default().push(idx);
            }
            kept.push(idx);
        }
    }

    kept.sort_unstable();
    let mut keep_flags = vec![false; candidates.len()];
    for idx in kept {
        keep_flags[idx] = true;
    }
    candidates
        .into_iter()
        .zip(keep_flags)
        .filter_map(|(pair, keep)| keep.then_some(pair.0))
        .collect()
}
