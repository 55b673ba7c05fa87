//! Geomorphometric node features.
//!
//! Five per-node measurements feed the graph network: normal-vector
//! dispersion (ruggedness), surface-to-projection area ratio, mean
//! inter-node slope, contour density, and contour direction entropy.

use nalgebra::{Matrix3, Vector3};

use super::contour::ContourSet;
use crate::raster::{BoundingBox, DemGrid};
use crate::{Error, Result};

/// Ruggedness of the `window` x `window` neighborhood centered on a pixel:
/// one minus the resultant length of the cells' unit surface normals over
/// the cell count. 0 means every normal agrees (any plane), 1 means total
/// dispersion.
///
/// Normals come from central differences, so the window plus a one-cell
/// apron must lie inside the grid and contain no nodata.
pub fn vrm(grid: &DemGrid, center: (usize, usize), window: usize) -> Result<f64> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "vrm window {window} must be odd and at least 3"
        )));
    }
    let (row, col) = center;
    let half = window / 2;
    let reach = half + 1;
    if row < reach || col < reach || row + reach >= grid.rows() || col + reach >= grid.cols() {
        return Err(Error::OutOfBounds(format!(
            "vrm window {window}+apron around ({row}, {col}) exceeds {}x{} grid",
            grid.rows(),
            grid.cols()
        )));
    }
    for r in row - reach..=row + reach {
        for c in col - reach..=col + reach {
            if grid.is_nodata(r, c) {
                return Err(Error::Nodata(format!("vrm neighborhood hits nodata at ({r}, {c})")));
            }
        }
    }

    let cell = grid.cell_size();
    let mut sum = [0.0f64; 3];
    for r in row - half..=row + half {
        for c in col - half..=col + half {
            let dzdx = (grid.get(r, c + 1) - grid.get(r, c - 1)) / (2.0 * cell);
            let dzdy = (grid.get(r + 1, c) - grid.get(r - 1, c)) / (2.0 * cell);
            let norm = (dzdx * dzdx + dzdy * dzdy + 1.0).sqrt();
            sum[0] -= dzdx / norm;
            sum[1] -= dzdy / norm;
            sum[2] += 1.0 / norm;
        }
    }
    let n = (window * window) as f64;
    let resultant = (sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]).sqrt();
    Ok((1.0 - resultant / n).clamp(0.0, 1.0))
}

/// Ratio of true 3D surface area to the area of the surface's projection
/// onto its own total-least-squares best-fit plane, for the patch spanned
/// by `bounds`. 1 for any planar patch regardless of tilt; grows with
/// roughness. Always at least 1 up to rounding, because projection can
/// only shrink each mesh triangle.
pub fn acr(grid: &DemGrid, bounds: &BoundingBox) -> Result<f64> {
    if bounds.rows() < 2 || bounds.cols() < 2 {
        return Err(Error::InvalidParameter(format!(
            "acr patch must span at least 2x2 cells, got {}x{}",
            bounds.rows(),
            bounds.cols()
        )));
    }
    if bounds.row_max >= grid.rows() || bounds.col_max >= grid.cols() {
        return Err(Error::OutOfBounds(format!(
            "acr patch rows {}..={} cols {}..={} exceeds {}x{} grid",
            bounds.row_min,
            bounds.row_max,
            bounds.col_min,
            bounds.col_max,
            grid.rows(),
            grid.cols()
        )));
    }

    let cell = grid.cell_size();
    let mut points: Vec<Vector3<f64>> = Vec::with_capacity(bounds.area());
    for r in bounds.row_min..=bounds.row_max {
        for c in bounds.col_min..=bounds.col_max {
            if grid.is_nodata(r, c) {
                return Err(Error::Nodata(format!("acr patch hits nodata at ({r}, {c})")));
            }
            points.push(Vector3::new(c as f64 * cell, r as f64 * cell, grid.get(r, c)));
        }
    }

    let normal = fit_plane_normal(&points);

    // Split each cell quad along its 00-11 diagonal into two triangles.
    let cols = bounds.cols();
    let corner = |r: usize, c: usize| points[r * cols + c];
    let mut surface = 0.0;
    let mut planar = 0.0;
    for r in 0..bounds.rows() - 1 {
        for c in 0..cols - 1 {
            for tri in [
                [corner(r, c), corner(r, c + 1), corner(r + 1, c + 1)],
                [corner(r, c), corner(r + 1, c + 1), corner(r + 1, c)],
            ] {
                let cross = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
                let area = 0.5 * cross.norm();
                surface += area;
                // Projected area is the true area scaled by the cosine
                // between the triangle and the fit plane.
                planar += 0.5 * cross.dot(&normal).abs();
            }
        }
    }
    if planar <= 0.0 {
        return Err(Error::Degenerate(
            "patch projects to zero area on its best-fit plane".into(),
        ));
    }
    Ok(surface / planar)
}

/// Unit normal of the total-least-squares plane through the point cloud:
/// the eigenvector of the covariance matrix with the smallest eigenvalue,
/// oriented with a non-negative z component.
fn fit_plane_normal(points: &[Vector3<f64>]) -> Vector3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;

    let eigen = cov.symmetric_eigen();
    let mut smallest = 0;
    for i in 1..3 {
        if eigen.eigenvalues[i] < eigen.eigenvalues[smallest] {
            smallest = i;
        }
    }
    let mut normal = eigen.eigenvectors.column(smallest).into_owned();
    if normal[2] < 0.0 {
        normal = -normal;
    }
    normal.normalize()
}

/// Slope angle in degrees between two nodes: arctangent of absolute
/// elevation difference over 2D horizontal distance.
pub fn slope_between(a: (f64, f64, f64), b: (f64, f64, f64)) -> Result<f64> {
    let dist = (b.0 - a.0).hypot(b.1 - a.1);
    if dist <= 0.0 {
        return Err(Error::InvalidParameter(
            "slope is undefined for nodes at the same 2D position".into(),
        ));
    }
    Ok(((b.2 - a.2).abs() / dist).atan().to_degrees())
}

/// Sum of contour arc length inside the disk of radius `r` around `center`,
/// divided by the disk area. Zero when no contour enters the disk.
pub fn contour_density(center: (f64, f64), contours: &ContourSet, r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("search radius {r} must be positive")));
    }
    let mut total = 0.0;
    for line in contours.polylines() {
        for seg in line.points().windows(2) {
            total += clipped_length(seg[0], seg[1], center, r);
        }
    }
    Ok(total / (std::f64::consts::PI * r * r))
}

/// Length of the part of segment `p`-`q` inside the disk, from the exact
/// quadratic line-circle intersection.
fn clipped_length(p: (f64, f64), q: (f64, f64), center: (f64, f64), r: f64) -> f64 {
    let d = (q.0 - p.0, q.1 - p.1);
    let f = (p.0 - center.0, p.1 - center.1);
    let a = d.0 * d.0 + d.1 * d.1;
    if a == 0.0 {
        return 0.0;
    }
    let b = 2.0 * (f.0 * d.0 + f.1 * d.1);
    let c = f.0 * f.0 + f.1 * f.1 - r * r;
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return 0.0;
    }
    let sqrt_disc = disc.sqrt();
    let t0 = ((-b - sqrt_disc) / (2.0 * a)).max(0.0);
    let t1 = ((-b + sqrt_disc) / (2.0 * a)).min(1.0);
    if t1 > t0 {
        (t1 - t0) * a.sqrt()
    } else {
        0.0
    }
}

/// Shannon entropy of contour segment directions inside the disk, in nats.
///
/// Segments are undirected, so azimuths fold into [0, pi) before binning;
/// each bin's probability is its share of clipped arc length. No segments
/// in the disk gives 0 by convention, a single direction gives 0, and a
/// uniform spread gives ln(bins).
pub fn direction_entropy(
    center: (f64, f64),
    contours: &ContourSet,
    r: f64,
    bins: usize,
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 direction bins, got {bins}")));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("search radius {r} must be positive")));
    }

    let mut weights = vec![0.0f64; bins];
    let bin_width = std::f64::consts::PI / bins as f64;
    for line in contours.polylines() {
        for seg in line.points().windows(2) {
            let len = clipped_length(seg[0], seg[1], center, r);
            if len <= 0.0 {
                continue;
            }
            let mut az = (seg[1].1 - seg[0].1).atan2(seg[1].0 - seg[0].0);
            if az < 0.0 {
                az += std::f64::consts::PI;
            }
            if az >= std::f64::consts::PI {
                az = 0.0;
            }
            let bin = ((az / bin_width) as usize).min(bins - 1);
            weights[bin] += len;
        }
    }

    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut entropy = 0.0;
    for w in weights {
        if w > 0.0 {
            let p = w / total;
            entropy -= p * p.ln();
        }
    }
    Ok(entropy.clamp(0.0, (bins as f64).ln()))
}
