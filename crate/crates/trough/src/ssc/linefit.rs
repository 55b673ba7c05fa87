//! Total-least-squares line fitting for skeleton pixels.
//!
//! The fitted line minimizes the mean squared perpendicular distance, which
//! is the smaller eigenvalue of the 2x2 coordinate covariance; the direction
//! is the matching principal eigenvector. Unlike ordinary regression of row
//! on column this has no vertical-line singularity, so slope and intercept
//! are derived conveniences that may be infinite or undefined while the
//! direction vector is always usable.

use crate::{Error, Result};

/// Fitted axis of a pixel set, in pixel coordinates (`x` = column,
/// `y` = row).
#[derive(Debug, Clone, PartialEq)]
pub struct LineFit {
    /// dy/dx of the axis; `inf` for vertical lines.
    pub slope: f64,
    /// y at x = 0; meaningless (NaN) for vertical lines.
    pub intercept: f64,
    /// Unit direction of the axis, `(dx, dy)`, normalized so the first
    /// nonzero component is positive.
    pub dir: (f64, f64),
    /// Mean of the pixel coordinates, `(x, y)`.
    pub centroid: (f64, f64),
    /// Extent of the pixel set projected on the axis, pixels.
    pub length_px: f64,
    /// Mean squared perpendicular distance, square pixels.
    pub mse: f64,
}

/// Fit the principal axis of `pixels` (at least 2 entries, `(row, col)`).
pub fn fit_skeleton_line(pixels: &[(usize, usize)]) -> Result<LineFit> {
    if pixels.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} pixel(s) cannot define a line",
            pixels.len()
        )));
    }
    let n = pixels.len() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for &(r, c) in pixels {
        cx += c as f64;
        cy += r as f64;
    }
    cx /= n;
    cy /= n;

    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(r, c) in pixels {
        let dx = c as f64 - cx;
        let dy = r as f64 - cy;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    sxx /= n;
    syy /= n;
    sxy /= n;

    // Eigenvalues of [[sxx, sxy], [sxy, syy]].
    let trace = sxx + syy;
    let gap = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let l_max = 0.5 * (trace + gap);
    let l_min = 0.5 * (trace - gap);

    // Principal eigenvector; fall back to the dominant coordinate axis when
    // the off-diagonal vanishes.
    let (mut dx, mut dy) = if sxy.abs() > 1e-12 {
        (sxy, l_max - sxx)
    } else if sxx >= syy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (dx * dx + dy * dy).sqrt();
    dx /= norm;
    dy /= norm;
    if dx < 0.0 || (dx == 0.0 && dy < 0.0) {
        dx = -dx;
        dy = -dy;
    }

    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for &(r, c) in pixels {
        let t = (c as f64 - cx) * dx + (r as f64 - cy) * dy;
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }

    let slope = dy / dx;
    Ok(LineFit {
        slope,
        intercept: cy - slope * cx,
        dir: (dx, dy),
        centroid: (cx, cy),
        length_px: t_max - t_min,
        mse: l_min.max(0.0),
    })
}
