//! Principal shape components and cosine ranking.

use super::ShapeMatrix;
use crate::{Error, Result};
use nalgebra::DMatrix;

/// Retained slice of a singular value decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTruncation {
    /// Number of retained components.
    pub k_pc: usize,
    /// Retained singular values, descending.
    pub singular_values: Vec<f64>,
    /// Matching right singular vectors.
    pub components: Vec<Vec<f64>>,
}

impl SvdTruncation {
    /// Re-truncate to exactly `k` leading components.
    pub fn retake(mut self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k_pc {
            return Err(Error::InvalidParameter(format!(
                "cannot retake {k} of {} retained components",
                self.k_pc
            )));
        }
        self.singular_values.truncate(k);
        self.components.truncate(k);
        self.k_pc = k;
        Ok(self)
    }
}

/// Decompose a shape matrix and keep the smallest leading component set
/// whose squared singular values cover `variance_keep` of the total.
pub fn svd_truncate(matrix: &ShapeMatrix, variance_keep: f64) -> Result<SvdTruncation> {
    if !(0.0..=1.0).contains(&variance_keep) {
        return Err(Error::InvalidParameter(format!(
            "variance fraction {variance_keep} outside [0, 1]"
        )));
    }
    let m = DMatrix::from_row_slice(matrix.rows(), matrix.cols(), matrix.data());
    let svd = m.svd(false, true);
    let vt = svd
        .v_t
        .expect("right singular vectors were requested");
    let sigma = svd.singular_values;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));

    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::Degenerate("zero shape matrix has no components".into()));
    }

    let mut k = order.len();
    let mut cum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        cum += sigma[i] * sigma[i];
        if cum >= variance_keep * total {
            k = rank + 1;
            break;
        }
    }

    let singular_values: Vec<f64> = order[..k].iter().map(|&i| sigma[i]).collect();
    let components: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| vt.row(i).iter().cloned().collect())
        .collect();
    Ok(SvdTruncation { k_pc: k, singular_values, components })
}

/// A terrain's projection structure onto the reference components.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    k_pc: usize,
    n: usize,
    data: Vec<f64>,
}

impl LoadingMatrix {
    /// Build from rows, validating uniform width and finite entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k_pc = rows.len();
        if k_pc == 0 {
            return Err(Error::Degenerate("loading matrix needs at least one row".into()));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::Degenerate("loading rows must be non-empty".into()));
        }
        let mut data = Vec::with_capacity(k_pc * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "loading row has {} entries, expected {n}",
                    row.len()
                )));
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!("non-finite loading entry {v}")));
                }
                data.push(v);
            }
        }
        Ok(Self { k_pc, n, data })
    }

    pub fn k_pc(&self) -> usize {
        self.k_pc
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    /// Row-major entries; the flattened vector the cosine compares.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Project a shape matrix onto reference components.
///
/// Component `j`'s coefficient is the mean dot product of the shape rows
/// with that component; the loading row is the component scaled by the
/// coefficient. A terrain identical to the reference therefore
/// reproduces the reference's own loading, and one orthogonal to every
/// component loads to zero.
pub fn loading_matrix(shape: &ShapeMatrix, components: &[Vec<f64>]) -> Result<LoadingMatrix> {
    if components.is_empty() {
        return Err(Error::InvalidParameter("no reference components given".into()));
    }
    let n = shape.cols();
    if let Some(bad) = components.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "component has {} entries, shape rows have {n}",
            bad.len()
        )));
    }
    let m = shape.rows() as f64;
    let mut data = Vec::with_capacity(components.len() * n);
    for comp in components {
        let coeff: f64 = (0..shape.rows())
            .map(|i| shape.row(i).iter().zip(comp).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            / m;
        data.extend(comp.iter().map(|v| coeff * v));
    }
    Ok(LoadingMatrix { k_pc: components.len(), n, data })
}

/// One candidate's similarity to the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct MtmScore {
    pub id: usize,
    /// Cosine of the flattened loading matrices, in [-1, 1].
    pub similarity: f64,
    /// True when the candidate's loading had zero norm; such candidates
    /// score 0 and rank behind every comparable one.
    pub degenerate: bool,
}

/// Rank loadings by cosine similarity to the reference, descending.
///
/// Zero-norm loadings cannot form a cosine; they score 0 and sort after
/// all well-formed candidates. Ties break by candidate id.
pub fn cosine_rank(
    loadings: &[(usize, LoadingMatrix)],
    reference: &LoadingMatrix,
    keep: usize,
) -> Result<Vec<MtmScore>> {
    if keep == 0 {
        return Err(Error::InvalidParameter("keep count must be at least 1".into()));
    }
    let ref_norm = norm(reference.data());
    if ref_norm == 0.0 {
        return Err(Error::Degenerate("reference loading has zero norm".into()));
    }

    let mut scores = Vec::with_capacity(loadings.len());
    for (id, loading) in loadings {
        if loading.k_pc() != reference.k_pc() || loading.cols() != reference.cols() {
            return Err(Error::DimensionMismatch(format!(
                "loading {}x{} does not match reference {}x{}",
                loading.k_pc(),
                loading.cols(),
                reference.k_pc(),
                reference.cols()
            )));
        }
        let cand_norm = norm(loading.data());
        if cand_norm == 0.0 {
            scores.push(MtmScore { id: *id, similarity: 0.0, degenerate: true });
        } else {
            let dot: f64 = loading.data().iter().zip(reference.data()).map(|(a, b)| a * b).sum();
            let similarity = (dot / (cand_norm * ref_norm)).clamp(-1.0, 1.0);
            scores.push(MtmScore { id: *id, similarity, degenerate: false });
        }
    }
    scores.sort_by(|a, b| {
        a.degenerate
            .cmp(&b.degenerate)
            .then(b.similarity.total_cmp(&a.similarity))
            .then(a.id.cmp(&b.id))
    });
    scores.truncate(keep);
    Ok(scores)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
