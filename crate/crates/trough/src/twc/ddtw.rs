//! Derivative dynamic time warping over slice sequences.
//!
//! Sequences are differentiated along the slice axis first, so constant
//! elevation offsets between terrains cancel exactly. Alignment then
//! runs an unconstrained dynamic program with unit steps, no band, and
//! no stretch penalty, which tolerates large along-axis stretching.

use super::SliceSequence;
use crate::{Error, Result};

/// First-order derivative of a sequence along its slice order.
///
/// For interior positions the estimator averages the backward difference
/// with the centered half-difference:
/// `d_i = ((q_i - q_{i-1}) + (q_{i+1} - q_{i-1}) / 2) / 2`,
/// applied element-wise across the slice vectors. The first and last
/// positions copy their adjacent interior derivative. Needs at least
/// three slices.
pub fn slice_derivative(seq: &SliceSequence) -> Result<SliceSequence> {
    let slices = seq.slices();
    let n = slices.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "derivative needs at least 3 slices, got {n}"
        )));
    }
    let width = seq.slice_width();
    let mut out = vec![vec![0.0; width]; n];
    for i in 1..n - 1 {
        for k in 0..width {
            let back = slices[i][k] - slices[i - 1][k];
            let centered = (slices[i + 1][k] - slices[i - 1][k]) / 2.0;
            out[i][k] = (back + centered) / 2.0;
        }
    }
    out[0] = out[1].clone();
    out[n - 1] = out[n - 2].clone();
    SliceSequence::from_slices(out, width, seq.along_spacing())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Minimal-cost alignment of two raw slice sequences.
///
/// Both sequences are differentiated, then a dynamic program aligns them
/// from the first pair to the last with steps that advance either index
/// or both. The cost is the sum of Euclidean distances between aligned
/// derivative slices along the cheapest path. Runs in O(n * m) time and
/// O(m) memory.
pub fn ddtw_cost(a: &SliceSequence, b: &SliceSequence) -> Result<f64> {
    if a.slice_width() != b.slice_width() {
        return Err(Error::DimensionMismatch(format!(
            "slice widths differ: {} vs {}",
            a.slice_width(),
            b.slice_width()
        )));
    }
    let da = slice_derivative(a)?;
    let db = slice_derivative(b)?;
    let da = da.slices();
    let db = db.slices();
    let m = db.len();

    let mut prev = vec![0.0; m];
    let mut cur = vec![0.0; m];
    prev[0] = euclidean(&da[0], &db[0]);
    for j in 1..m {
        prev[j] = prev[j - 1] + euclidean(&da[0], &db[j]);
    }
    for i in 1..da.len() {
        cur[0] = prev[0] + euclidean(&da[i], &db[0]);
        for j in 1..m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = best + euclidean(&da[i], &db[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Alignment cost ignoring which end of the candidate axis is which.
///
/// A fitted axis has no inherent orientation, so the candidate is scored
/// both ways and the cheaper alignment wins.
pub fn bidirectional_ddtw(a: &SliceSequence, b: &SliceSequence) -> Result<f64> {
    let forward = ddtw_cost(a, b)?;
    let backward = ddtw_cost(&a.reversed(), b)?;
    Ok(forward.min(backward))
}
