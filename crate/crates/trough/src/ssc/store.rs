//! On-disk candidate sets.
//!
//! The scan stage is by far the most expensive part of a run, so its output
//! can be persisted and the later stages re-run against it. A stored set is
//! a directory holding one `candidates.csv` metadata table plus one raster
//! file per candidate, named `cand_00042.asc` after the candidate id.
//! Rasters are stored as ascii grids rather than the binary format because
//! the ascii writer round-trips every f64 exactly; stages re-run against a
//! stored set therefore score bit-identically to an in-memory run.

use std::path::{Path, PathBuf};

use crate::raster::ascii::{load_ascii_grid, save_ascii_grid};
use crate::raster::BoundingBox;
use crate::ssc::linefit::LineFit;
use crate::ssc::ValleyCandidate;
use crate::{Error, Result};

const FORMAT: &str = "candidate table";

/// File name of the metadata table inside a candidate directory.
pub const CANDIDATE_TABLE: &str = "candidates.csv";

const HEADER: &str = "id,source_tile,row_min,row_max,col_min,col_max,\
slope,intercept,dir_x,dir_y,centroid_x,centroid_y,length_px,mse";

/// Everything a table row records about one candidate: all of
/// [`ValleyCandidate`] except the raster, which lives in its own file.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMeta {
    pub id: usize,
    pub source_tile: String,
    pub bounds: BoundingBox,
    pub fit: LineFit,
}

/// File name of one candidate's raster inside the directory.
pub fn candidate_file(id: usize) -> String {
    format!("cand_{id:05}.asc")
}

/// Render the metadata table. Floats print shortest round-trip, so the
/// parsed table reproduces every value exactly (a vertical axis keeps its
/// `inf` slope and `NaN` intercept). Tile names must stay out of the CSV
/// syntax, so commas and line breaks in them are rejected.
pub fn candidate_table(cands: &[ValleyCandidate]) -> Result<String> {
    let mut text = String::from(HEADER);
    text.push('\n');
    for c in cands {
        if c.source_tile.contains(',') || c.source_tile.contains('\n') {
            return Err(Error::InvalidParameter(format!(
                "tile name \"{}\" contains a comma or line break",
                c.source_tile.escape_debug()
            )));
        }
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.id,
            c.source_tile,
            c.bounds.row_min,
            c.bounds.row_max,
            c.bounds.col_min,
            c.bounds.col_max,
            c.fit.slope,
            c.fit.intercept,
            c.fit.dir.0,
            c.fit.dir.1,
            c.fit.centroid.0,
            c.fit.centroid.1,
            c.fit.length_px,
            c.fit.mse,
        ));
    }
    Ok(text)
}

/// Parse a metadata table. The header is required; blank lines are
/// ignored; errors name the offending row (the header is row 1).
pub fn parse_candidate_table(text: &str) -> Result<Vec<CandidateMeta>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((_, line)) => break line,
            None => return Err(Error::parse(FORMAT, "file is empty")),
        }
    };
    let normalized: String = header.split(',').map(str::trim).collect::<Vec<_>>().join(",");
    if normalized != HEADER {
        return Err(Error::parse(
            FORMAT,
            format!("header must be \"{HEADER}\", got \"{header}\""),
        ));
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 14 {
            return Err(Error::parse(
                FORMAT,
                format!("row {row}: expected 14 fields, got {}", fields.len()),
            ));
        }
        let id = parse_int(fields[0], row, "id")?;
        let row_min = parse_int(fields[2], row, "row_min")?;
        let row_max = parse_int(fields[3], row, "row_max")?;
        let col_min = parse_int(fields[4], row, "col_min")?;
        let col_max = parse_int(fields[5], row, "col_max")?;
        if row_max < row_min || col_max < col_min {
            return Err(Error::parse(
                FORMAT,
                format!("row {row}: bounding box is inverted"),
            ));
        }
        rows.push(CandidateMeta {
            id,
            source_tile: fields[1].to_string(),
            bounds: BoundingBox::new(row_min, row_max, col_min, col_max),
            fit: LineFit {
                slope: parse_float(fields[6], row, "slope")?,
                intercept: parse_float(fields[7], row, "intercept")?,
                dir: (
                    parse_float(fields[8], row, "dir_x")?,
                    parse_float(fields[9], row, "dir_y")?,
                ),
                centroid: (
                    parse_float(fields[10], row, "centroid_x")?,
                    parse_float(fields[11], row, "centroid_y")?,
                ),
                length_px: parse_float(fields[12], row, "length_px")?,
                mse: parse_float(fields[13], row, "mse")?,
            },
        });
    }
    Ok(rows)
}

/// Write `cands` into `dir` (created if missing): the metadata table plus
/// one raster file per candidate. Returns the table path.
pub fn save_candidates(dir: &Path, cands: &[ValleyCandidate]) -> Result<PathBuf> {
    let table = candidate_table(cands)?;
    std::fs::create_dir_all(dir)?;
    for c in cands {
        save_ascii_grid(&c.raster, &dir.join(candidate_file(c.id)))?;
    }
    let path = dir.join(CANDIDATE_TABLE);
    std::fs::write(&path, table)?;
    Ok(path)
}

/// Read a stored candidate set back, in table order.
pub fn load_candidates(dir: &Path) -> Result<Vec<ValleyCandidate>> {
    let text = std::fs::read_to_string(dir.join(CANDIDATE_TABLE))?;
    let rows = parse_candidate_table(&text)?;
    rows.into_iter()
        .map(|meta| {
            let raster = load_ascii_grid(&dir.join(candidate_file(meta.id)))?;
            Ok(ValleyCandidate {
                id: meta.id,
                source_tile: meta.source_tile,
                bounds: meta.bounds,
                fit: meta.fit,
                raster,
            })
        })
        .collect()
}

fn parse_int(field: &str, row: usize, name: &str) -> Result<usize> {
    field.parse().map_err(|_| {
        Error::parse(
            FORMAT,
            format!("row {row}: {name} has non-numeric value \"{field}\""),
        )
    })
}

fn parse_float(field: &str, row: usize, name: &str) -> Result<f64> {
    field.parse().map_err(|_| {
        Error::parse(
            FORMAT,
            format!("row {row}: {name} has non-numeric value \"{field}\""),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::synth::{synth_terrain, SynthSpec, ValleySpec};
    use crate::ssc::{detect_candidates, SscConfig};

    fn detected() -> Vec<ValleyCandidate> {
        let mut spec = SynthSpec::flat(256, 256, 30.0);
        spec.roughness_m = 8.0;
        spec.valleys.push(ValleySpec {
            start: (30.0, 20.0),
            end: (220.0, 235.0),
            depth_m: 260.0,
            width_m: 800.0,
            jitter_m: 40.0,
        });
        let grid = synth_terrain(&spec, 77);
        detect_candidates(&grid, "tile_0_0", &SscConfig::default()).unwrap()
    }

    fn same_float(a: f64, b: f64) -> bool {
        a == b || (a.is_nan() && b.is_nan())
    }

    fn same_fit(a: &LineFit, b: &LineFit) -> bool {
        same_float(a.slope, b.slope)
            && same_float(a.intercept, b.intercept)
            && a.dir == b.dir
            && a.centroid == b.centroid
            && a.length_px == b.length_px
            && a.mse == b.mse
    }

    #[test]
    fn saved_set_loads_back_identically() {
        let cands = detected();
        assert!(!cands.is_empty());
        let dir = tempfile::tempdir().unwrap();
        save_candidates(dir.path(), &cands).unwrap();
        let loaded = load_candidates(dir.path()).unwrap();
        assert_eq!(loaded.len(), cands.len());
        for (a, b) in cands.iter().zip(&loaded) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.source_tile, b.source_tile);
            assert_eq!(a.bounds, b.bounds);
            assert!(same_fit(&a.fit, &b.fit));
            assert_eq!(a.raster, b.raster);
        }
    }

    #[test]
    fn vertical_axis_round_trips_through_text() {
        let mut cands = detected();
        cands.truncate(1);
        cands[0].fit.slope = f64::INFINITY;
        cands[0].fit.intercept = f64::NAN;
        let text = candidate_table(&cands).unwrap();
        let rows = parse_candidate_table(&text).unwrap();
        assert!(same_fit(&cands[0].fit, &rows[0].fit));
    }

    #[test]
    fn tile_names_with_csv_syntax_are_rejected() {
        let mut cands = detected();
        cands.truncate(1);
        cands[0].source_tile = "a,b".into();
        assert!(candidate_table(&cands).is_err());
        cands[0].source_tile = "a\nb".into();
        assert!(candidate_table(&cands).is_err());
    }

    #[test]
    fn parse_errors_name_the_row() {
        let mut cands = detected();
        cands.truncate(1);
        let good = candidate_table(&cands).unwrap();

        let short = format!("{HEADER}\n1,t,0,1,0,1\n");
        let msg = parse_candidate_table(&short).unwrap_err().to_string();
        assert!(msg.contains("row 2"), "{msg}");

        let bad_float = good.replace(&format!("{}", cands[0].fit.mse), "x");
        let msg = parse_candidate_table(&bad_float).unwrap_err().to_string();
        assert!(msg.contains("mse"), "{msg}");

        let inverted = format!("{HEADER}\n1,t,5,2,0,1,0,0,1,0,0,0,3,0.1\n");
        let msg = parse_candidate_table(&inverted).unwrap_err().to_string();
        assert!(msg.contains("inverted"), "{msg}");

        assert!(parse_candidate_table("").is_err());
        assert!(parse_candidate_table("id,foo\n").is_err());
    }

    #[test]
    fn an_empty_set_is_a_bare_header() {
        let text = candidate_table(&[]).unwrap();
        assert_eq!(parse_candidate_table(&text).unwrap(), Vec::new());
        let dir = tempfile::tempdir().unwrap();
        save_candidates(dir.path(), &[]).unwrap();
        assert!(load_candidates(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn missing_raster_files_fail_the_load() {
        let cands = detected();
        let dir = tempfile::tempdir().unwrap();
        save_candidates(dir.path(), &cands).unwrap();
        std::fs::remove_file(dir.path().join(candidate_file(cands[0].id))).unwrap();
        assert!(load_candidates(dir.path()).is_err());
    }
}
