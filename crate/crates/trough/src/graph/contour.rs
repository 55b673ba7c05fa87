//! Contour extraction and equidistant node sampling.
//!
//! Level-set polylines are traced by marching squares with linear
//! interpolation along cell edges. Crossing positions on a shared edge are
//! computed from the same ordered corner pair by both adjacent cells, so
//! chained segments join bitwise exactly and rings close without tolerance.
//! Coordinates are local meters: `x = col * cell_size`, `y = row * cell_size`.

use std::collections::HashMap;

use crate::raster::DemGrid;
use crate::{Error, Result};

/// One polyline at a single contour level. Closed rings repeat their first
/// point as the last point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourLine {
    level: f64,
    points: Vec<(f64, f64)>,
}

impl ContourLine {
    /// Build from explicit points, for tests and synthetic inputs.
    pub fn from_points(level: f64, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Degenerate(format!(
                "contour polyline needs at least 2 points, got {}",
                points.len()
            )));
        }
        Ok(ContourLine { level, points })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Rings close exactly: the tracer re-emits the starting vertex.
    pub fn is_closed(&self) -> bool {
        self.points.first() == self.points.last() && self.points.len() > 2
    }

    /// Total arc length in meters.
    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                dx.hypot(dy)
            })
            .sum()
    }
}

/// All contour polylines of a grid at one level interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet {
    interval: f64,
    polylines: Vec<ContourLine>,
}

impl ContourSet {
    pub fn from_polylines(interval: f64, polylines: Vec<ContourLine>) -> Result<Self> {
        if !(interval > 0.0) || !interval.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "contour interval {interval} must be positive"
            )));
        }
        Ok(ContourSet { interval, polylines })
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn polylines(&self) -> &[ContourLine] {
        &self.polylines
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }
}

/// A sampled contour point carrying its level as elevation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourNode {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// A crossing lives on a unique grid edge between two corner pixels;
/// the key identifies it exactly, independent of floating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    /// Between corners (r, c) and (r, c + 1).
    H(usize, usize),
    /// Between corners (r, c) and (r + 1, c).
    V(usize, usize),
}

fn edge_point(grid: &DemGrid, level: f64, key: EdgeKey) -> (f64, f64) {
    let cell = grid.cell_size();
    match key {
        EdgeKey::H(r, c) => {
            let a = grid.get(r, c);
            let b = grid.get(r, c + 1);
            let t = (level - a) / (b - a);
            ((c as f64 + t) * cell, r as f64 * cell)
        }
        EdgeKey::V(r, c) => {
            let a = grid.get(r, c);
            let b = grid.get(r + 1, c);
            let t = (level - a) / (b - a);
            (c as f64 * cell, (r as f64 + t) * cell)
        }
    }
}

/// Trace level-set polylines at `base + k * interval` for every level that
/// cuts the elevation range, where `base = floor(min / interval) * interval`.
///
/// A corner counts as above a level when strictly greater, so a level equal
/// to the maximum produces nothing and a flat grid yields an empty set.
/// Cells touching nodata are skipped. Saddle cells are disambiguated by the
/// corner mean, which keeps the output deterministic.
pub fn extract_contours(grid: &DemGrid, interval: f64) -> Result<ContourSet> {
    if !(interval > 0.0) || !interval.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "contour interval {interval} must be positive"
        )));
    }
    if grid.rows() < 2 || grid.cols() < 2 {
        return Err(Error::Degenerate(format!(
            "contour extraction needs at least 2x2 cells, got {}x{}",
            grid.rows(),
            grid.cols()
        )));
    }

    let Some((lo, hi)) = grid.value_range() else {
        return ContourSet::from_polylines(interval, Vec::new());
    };
    let base = (lo / interval).floor() * interval;

    let mut polylines = Vec::new();
    let mut k = 0u64;
    loop {
        let level = base + k as f64 * interval;
        if level >= hi {
            break;
        }
        if level >= lo {
            trace_level(grid, level, &mut polylines);
        }
        k += 1;
    }
    ContourSet::from_polylines(interval, polylines)
}

fn trace_level(grid: &DemGrid, level: f64, out: &mut Vec<ContourLine>) {
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for r in 0..grid.rows() - 1 {
        for c in 0..grid.cols() - 1 {
            if grid.is_nodata(r, c)
                || grid.is_nodata(r, c + 1)
                || grid.is_nodata(r + 1, c)
                || grid.is_nodata(r + 1, c + 1)
            {
                continue;
            }
            let tl = grid.get(r, c);
            let tr = grid.get(r, c + 1);
            let br = grid.get(r + 1, c + 1);
            let bl = grid.get(r + 1, c);
            let code = ((tl > level) as u8) << 3
                | ((tr > level) as u8) << 2
                | ((br > level) as u8) << 1
                | ((bl > level) as u8);

            let top = EdgeKey::H(r, c);
            let bottom = EdgeKey::H(r + 1, c);
            let left = EdgeKey::V(r, c);
            let right = EdgeKey::V(r, c + 1);
            match code {
                0 | 15 => {}
                8 | 7 => segments.push((top, left)),
                4 | 11 => segments.push((top, right)),
                2 | 13 => segments.push((right, bottom)),
                1 | 14 => segments.push((bottom, left)),
                12 | 3 => segments.push((left, right)),
                9 | 6 => segments.push((top, bottom)),
                10 => {
                    if (tl + tr + br + bl) / 4.0 > level {
                        segments.push((top, right));
                        segments.push((bottom, left));
                    } else {
                        segments.push((top, left));
                        segments.push((bottom, right));
                    }
                }
                5 => {
                    if (tl + tr + br + bl) / 4.0 > level {
                        segments.push((top, left));
                        segments.push((bottom, right));
                    } else {
                        segments.push((top, right));
                        segments.push((bottom, left));
                    }
                }
                _ => unreachable!("4-bit case"),
            }
        }
    }

    // Each grid edge hosts at most one crossing per level and each crossing
    // touches at most two segments, so chains are simple paths or rings.
    // The map is only ever indexed by key, never iterated, which keeps the
    // walk order deterministic.
    let mut adjacent: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (i, seg) in segments.iter().enumerate() {
        adjacent.entry(seg.0).or_default().push(i);
        adjacent.entry(seg.1).or_default().push(i);
    }

    let mut used = vec![false; segments.len()];
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut keys = std::collections::VecDeque::new();
        keys.push_back(segments[start].0);
        keys.push_back(segments[start].1);

        let mut closed = false;
        let mut cursor = segments[start].1;
        while let Some(&j) = adjacent[&cursor].iter().find(|&&j| !used[j]) {
            used[j] = true;
            let far = if segments[j].0 == cursor { segments[j].1 } else { segments[j].0 };
            keys.push_back(far);
            cursor = far;
            if far == segments[start].0 {
                closed = true;
                break;
            }
        }
        if !closed {
            cursor = segments[start].0;
            while let Some(&j) = adjacent[&cursor].iter().find(|&&j| !used[j]) {
                used[j] = true;
                let far = if segments[j].0 == cursor { segments[j].1 } else { segments[j].0 };
                keys.push_front(far);
                cursor = far;
            }
        }

        let points: Vec<(f64, f64)> =
            keys.iter().map(|&k| edge_point(grid, level, k)).collect();
        out.push(ContourLine { level, points });
    }
}

/// Walk every polyline and emit a node each `spacing` meters of arc length,
/// starting at the first vertex. Open polylines include their far end when
/// a step lands on it; closed rings skip the coincident final vertex so no
/// node is emitted twice.
pub fn sample_nodes(contours: &ContourSet, spacing: f64) -> Result<Vec<ContourNode>> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "node spacing {spacing} must be positive"
        )));
    }
    let mut nodes = Vec::new();
    for line in contours.polylines() {
        let pts = line.points();
        let total = line.length();
        let eps = 1e-9 * total.max(1.0);
        let limit = if line.is_closed() { total - eps } else { total + eps };

        let mut seg = 0;
        let mut seg_start = 0.0;
        let mut seg_len = segment_length(pts, 0);
        let mut k = 0u64;
        loop {
            let s = k as f64 * spacing;
            if s > limit {
                break;
            }
            while seg + 2 < pts.len() && s > seg_start + seg_len {
                seg_start += seg_len;
                seg += 1;
                seg_len = segment_length(pts, seg);
            }
            let t = if seg_len > 0.0 { ((s - seg_start) / seg_len).clamp(0.0, 1.0) } else { 0.0 };
            let (a, b) = (pts[seg], pts[seg + 1]);
            nodes.push(ContourNode {
                x: a.0 + t * (b.0 - a.0),
                y: a.1 + t * (b.1 - a.1),
                z: line.level(),
            });
            k += 1;
        }
    }
    Ok(nodes)
}

fn segment_length(pts: &[(f64, f64)], seg: usize) -> f64 {
    let (a, b) = (pts[seg], pts[seg + 1]);
    (b.0 - a.0).hypot(b.1 - a.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_from_fn(rows: usize, cols: usize, cell: f64, f: impl Fn(f64, f64) -> f64) -> DemGrid {
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                f(c as f64 * cell, r as f64 * cell)
            })
            .collect();
        DemGrid::from_data(rows, cols, cell, (0.0, 0.0), -9999.0, data).unwrap()
    }

    #[test]
    fn tilted_plane_yields_parallel_straight_contours() {
        let grid = grid_from_fn(20, 20, 10.0, |x, _| 0.5 * x);
        let set = extract_contours(&grid, 10.0).unwrap();
        assert!(!set.is_empty());

        let mut level_x: Vec<(f64, f64)> = Vec::new();
        for line in set.polylines() {
            let x0 = line.points()[0].0;
            for p in line.points() {
                assert_abs_diff_eq!(p.0, x0, epsilon = 1e-9);
            }
            let ys: Vec<f64> = line.points().iter().map(|p| p.1).collect();
            let span = ys.iter().cloned().fold(f64::MIN, f64::max)
                - ys.iter().cloned().fold(f64::MAX, f64::min);
            assert_abs_diff_eq!(span, 190.0, epsilon = 1e-9);
            level_x.push((line.level(), x0));
        }
        level_x.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in level_x.windows(2) {
            assert_abs_diff_eq!(w[1].1 - w[0].1, 10.0 / 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(w[1].0 - w[0].0, 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cone_produces_closed_rings_of_analytic_circumference() {
        let grid = grid_from_fn(64, 64, 1.0, |x, y| {
            2.0 * ((x - 31.5).powi(2) + (y - 31.5).powi(2)).sqrt()
        });
        let set = extract_contours(&grid, 20.0).unwrap();
        for level in [20.0, 40.0, 60.0] {
            let rings: Vec<&ContourLine> =
                set.polylines().iter().filter(|l| l.level() == level).collect();
            assert_eq!(rings.len(), 1, "level {level}");
            assert!(rings[0].is_closed());
            let radius = level / 2.0;
            let expect = 2.0 * std::f64::consts::PI * radius;
            let got = rings[0].length();
            assert!(
                (got - expect).abs() / expect < 0.05,
                "level {level}: ring length {got}, analytic {expect}"
            );
        }
    }

    #[test]
    fn constant_grid_has_no_contours() {
        let grid = DemGrid::filled(8, 8, 30.0, (0.0, 0.0), 1234.5);
        let set = extract_contours(&grid, 100.0).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn rough_surface_chains_are_gapless_and_end_on_the_boundary() {
        let grid = grid_from_fn(40, 40, 30.0, |x, y| {
            80.0 * (x / 170.0).sin() * (y / 140.0).cos() + 40.0 * (x / 61.0).cos()
        });
        let set = extract_contours(&grid, 25.0).unwrap();
        assert!(!set.is_empty());
        let (w, h) = (39.0 * 30.0, 39.0 * 30.0);
        let base = (grid.value_range().unwrap().0 / 25.0).floor() * 25.0;
        for line in set.polylines() {
            assert!(line.points().len() >= 2);
            let k = (line.level() - base) / 25.0;
            assert_abs_diff_eq!(k, k.round(), epsilon = 1e-9);
            for seg in line.points().windows(2) {
                let step = (seg[1].0 - seg[0].0).hypot(seg[1].1 - seg[0].1);
                assert!(step <= 30.0 * 2f64.sqrt() + 1e-9, "jump of {step} m");
            }
            if !line.is_closed() {
                for p in [line.points()[0], *line.points().last().unwrap()] {
                    let on_rim = p.0.abs() < 1e-9
                        || (p.0 - w).abs() < 1e-9
                        || p.1.abs() < 1e-9
                        || (p.1 - h).abs() < 1e-9;
                    assert!(on_rim, "open chain endpoint {p:?} off the boundary");
                }
            }
        }
    }

    #[test]
    fn nodata_cells_are_left_out() {
        let mut grid = grid_from_fn(20, 20, 10.0, |x, _| 0.5 * x);
        for r in 0..20 {
            for c in 8..12 {
                grid.set(r, c, grid.nodata());
            }
        }
        let set = extract_contours(&grid, 10.0).unwrap();
        for line in set.polylines() {
            for p in line.points() {
                assert!(
                    p.0 <= 80.0 + 1e-9 || p.0 >= 110.0 - 1e-9,
                    "point {p:?} inside the nodata band"
                );
            }
        }
    }

    #[test]
    fn straight_contour_samples_every_spacing_inclusive() {
        let line = ContourLine::from_points(300.0, vec![(0.0, 0.0), (100.0, 0.0)]).unwrap();
        let set = ContourSet::from_polylines(50.0, vec![line]).unwrap();
        let nodes = sample_nodes(&set, 25.0).unwrap();
        assert_eq!(nodes.len(), 5);
        for (i, n) in nodes.iter().enumerate() {
            assert_abs_diff_eq!(n.x, 25.0 * i as f64, epsilon = 1e-9);
            assert_abs_diff_eq!(n.y, 0.0, epsilon = 1e-12);
            assert_eq!(n.z, 300.0);
        }
    }

    #[test]
    fn spacing_longer_than_polyline_keeps_only_the_start() {
        let line = ContourLine::from_points(120.0, vec![(5.0, 7.0), (65.0, 7.0)]).unwrap();
        let set = ContourSet::from_polylines(40.0, vec![line]).unwrap();
        let nodes = sample_nodes(&set, 500.0).unwrap();
        assert_eq!(nodes.len(), 1);
        assert_eq!((nodes[0].x, nodes[0].y), (5.0, 7.0));
    }

    #[test]
    fn closed_ring_sampling_matches_arc_walk_oracle() {
        let radius = 100.0;
        let mut pts: Vec<(f64, f64)> = (0..512)
            .map(|k| {
                let th = k as f64 / 512.0 * std::f64::consts::TAU;
                (radius * th.cos(), radius * th.sin())
            })
            .collect();
        pts.push(pts[0]);
        let line = ContourLine::from_points(-4000.0, pts.clone()).unwrap();
        assert!(line.is_closed());
        let total = line.length();
        let set = ContourSet::from_polylines(100.0, vec![line]).unwrap();
        let nodes = sample_nodes(&set, 50.0).unwrap();

        let expected = (0..)
            .take_while(|&k| k as f64 * 50.0 < total - 1e-9 * total)
            .count();
        assert_eq!(nodes.len(), expected);
        assert_eq!(nodes.len(), (total / 50.0).floor() as usize + 1);

        for n in &nodes {
            assert_abs_diff_eq!(n.x.hypot(n.y), radius, epsilon = 0.05);
        }
        let (first, second) = (nodes[0], nodes[1]);
        assert_eq!((first.x, first.y), pts[0]);
        let chord = (second.x - first.x).hypot(second.y - first.y);
        let analytic_chord = 2.0 * radius * (25.0 / radius).sin();
        assert_abs_diff_eq!(chord, analytic_chord, epsilon = 0.05);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let grid = DemGrid::filled(4, 4, 30.0, (0.0, 0.0), 0.0);
        assert!(matches!(extract_contours(&grid, 0.0), Err(Error::InvalidParameter(_))));
        let one_row = DemGrid::filled(1, 9, 30.0, (0.0, 0.0), 0.0);
        assert!(matches!(extract_contours(&one_row, 10.0), Err(Error::Degenerate(_))));
        let set = ContourSet::from_polylines(10.0, Vec::new()).unwrap();
        assert!(matches!(sample_nodes(&set, 0.0), Err(Error::InvalidParameter(_))));
        assert!(ContourLine::from_points(0.0, vec![(0.0, 0.0)]).is_err());
    }

    #[test]
    fn deterministic_across_runs_and_nudged_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let noise: Vec<f64> = (0..40 * 40).map(|_| rng.random_range(-5.0..5.0)).collect();
        let grid = {
            let data: Vec<f64> = (0..40 * 40)
                .map(|i| {
                    let (r, c) = (i / 40, i % 40);
                    120.0 * ((c as f64) / 9.0).sin() * ((r as f64) / 7.0).cos() + noise[i]
                })
                .collect();
            DemGrid::from_data(40, 40, 30.0, (0.0, 0.0), -9999.0, data).unwrap()
        };
        let a = extract_contours(&grid, 40.0).unwrap();
        let b = extract_contours(&grid, 40.0).unwrap();
        assert_eq!(a, b);
        let na = sample_nodes(&a, 90.0).unwrap();
        let nb = sample_nodes(&b, 90.0).unwrap();
        assert_eq!(na.len(), nb.len());
        assert!(na.iter().zip(&nb).all(|(p, q)| p == q));
    }
}
