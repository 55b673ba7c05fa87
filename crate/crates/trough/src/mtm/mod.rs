//! Stage 3: texture matching on cross-section shape.
//!
//! Candidate profiles are resampled onto a common resolution chosen so
//! the reference reconstructs within a bounded mean absolute error, then
//! turned into matrices of turning angles. A truncated singular value
//! decomposition of the reference matrix yields its principal shape
//! components; every terrain is projected onto those components and
//! ranked by the cosine similarity of the resulting loading matrices.

mod rank;

pub use rank::{cosine_rank, loading_matrix, svd_truncate, LoadingMatrix, MtmScore, SvdTruncation};

use crate::twc::SliceSequence;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Parameters for the texture matching stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MtmConfig {
    /// Largest tolerated reconstruction deviation when choosing the
    /// common profile resolution, as a fraction of the value span.
    pub deviation_bound: f64,
    /// Fraction of squared singular value mass the retained components
    /// must cover.
    pub variance_keep: f64,
    /// Pin the common profile resolution instead of scanning for the
    /// minimal one that meets the deviation bound.
    pub target_n_override: Option<usize>,
    /// Pin the retained component count instead of applying the
    /// variance rule.
    pub k_pc_override: Option<usize>,
}

impl Default for MtmConfig {
    fn default() -> Self {
        Self {
            deviation_bound: 0.015,
            variance_keep: 0.80,
            target_n_override: None,
            k_pc_override: None,
        }
    }
}

/// A matrix of turning angles, one row per cross-section slice.
///
/// Entries live in `(-pi, pi]`; the column count is two less than the
/// profile resolution because each turning angle consumes three
/// consecutive points.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMatrix {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl ShapeMatrix {
    /// Build from rows, validating uniform width and the angle range.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Degenerate("shape matrix needs at least one row".into()));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::Degenerate("shape matrix rows must be non-empty".into()));
        }
        let mut data = Vec::with_capacity(m * n);
        for row in &rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "shape row has {} angles, expected {n}",
                    row.len()
                )));
            }
            for &a in row {
                if !a.is_finite() || a <= -std::f64::consts::PI || a > std::f64::consts::PI {
                    return Err(Error::InvalidParameter(format!(
                        "turning angle {a} outside (-pi, pi]"
                    )));
                }
                data.push(a);
            }
        }
        Ok(Self { m, n, data })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Resample `values` to `target_n` equidistant points by linear
/// interpolation over the index axis.
fn resample_linear(values: &[f64], target_n: usize) -> Vec<f64> {
    let len = values.len();
    let step = (len - 1) as f64 / (target_n - 1) as f64;
    (0..target_n)
        .map(|i| {
            let x = i as f64 * step;
            let i0 = (x.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            let f = x - i0 as f64;
            values[i0] * (1.0 - f) + values[i1] * f
        })
        .collect()
}

/// Mean absolute reconstruction error of `original` from its resampled
/// form, as a fraction of the original value span.
fn reconstruction_deviation(original: &[f64], resampled: &[f64]) -> Result<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in original {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        return Err(Error::Degenerate(
            "constant profile has zero span, deviation undefined".into(),
        ));
    }
    let len = original.len();
    let n = resampled.len();
    let step = (len - 1) as f64 / (n - 1) as f64;
    let mut abs_sum = 0.0;
    for (j, &y) in original.iter().enumerate() {
        let u = j as f64 / step;
        let k0 = (u.floor() as usize).min(n - 1);
        let k1 = (k0 + 1).min(n - 1);
        let f = u - k0 as f64;
        let reconstructed = resampled[k0] * (1.0 - f) + resampled[k1] * f;
        abs_sum += (y - reconstructed).abs();
    }
    Ok(abs_sum / len as f64 / (hi - lo))
}

/// Resample a profile and report how faithfully the result reconstructs
/// the original.
///
/// The deviation is the mean absolute difference between the original
/// points and their linear reconstruction from the resampled profile,
/// normalized by the original value span. Constant profiles make the
/// normalization undefined and are rejected.
pub fn mae_resample(profile: &[f64], target_n: usize) -> Result<(Vec<f64>, f64)> {
    if profile.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "profile has {} points, need at least 2",
            profile.len()
        )));
    }
    if target_n < 2 {
        return Err(Error::InvalidParameter(format!(
            "target resolution {target_n} must be at least 2"
        )));
    }
    let resampled = resample_linear(profile, target_n);
    let deviation = reconstruction_deviation(profile, &resampled)?;
    Ok((resampled, deviation))
}

/// Smallest resolution at which every reference slice reconstructs
/// within `bound`.
///
/// Scans upward from two points; the slice width itself always
/// qualifies because resampling is then the identity. Constant slices
/// reconstruct exactly at any resolution and do not constrain the scan.
pub fn choose_target_resolution(ref_slices: &SliceSequence, bound: f64) -> Result<usize> {
    if !bound.is_finite() || bound < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "deviation bound {bound} must be non-negative"
        )));
    }
    let width = ref_slices.slice_width();
    if width < 2 {
        return Err(Error::Degenerate(format!(
            "slices of width {width} cannot be resampled"
        )));
    }
    for n in 2..width {
        let ok = ref_slices.slices().iter().all(|slice| {
            let resampled = resample_linear(slice, n);
            match reconstruction_deviation(slice, &resampled) {
                Ok(dev) => dev <= bound,
                Err(_) => true,
            }
        });
        if ok {
            return Ok(n);
        }
    }
    Ok(width)
}

/// Resample every slice of a sequence to `target_n` points.
pub fn resample_sequence(seq: &SliceSequence, target_n: usize) -> Result<SliceSequence> {
    if target_n < 2 {
        return Err(Error::InvalidParameter(format!(
            "target resolution {target_n} must be at least 2"
        )));
    }
    let slices = seq
        .slices()
        .iter()
        .map(|s| resample_linear(s, target_n))
        .collect();
    SliceSequence::from_slices(slices, target_n, seq.along_spacing())
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Turning angles of a profile sampled at unit horizontal steps.
///
/// Each of the `p - 1` segments gets a direction angle from `atan2` of
/// its rise over the unit step; consecutive direction differences,
/// wrapped to `(-pi, pi]`, form the `p - 2` turning angles. The unit
/// step keeps the angles independent of the source resolution.
pub fn shape_function(profile: &[f64]) -> Result<Vec<f64>> {
    let p = profile.len();
    if p < 3 {
        return Err(Error::Degenerate(format!(
            "shape function needs at least 3 points, got {p}"
        )));
    }
    let directions: Vec<f64> = profile
        .windows(2)
        .map(|w| (w[1] - w[0]).atan2(1.0))
        .collect();
    Ok(directions.windows(2).map(|w| wrap_angle(w[1] - w[0])).collect())
}

/// Stack the turning angles of every slice into a matrix.
pub fn shape_matrix(seq: &SliceSequence) -> Result<ShapeMatrix> {
    let rows: Result<Vec<Vec<f64>>> = seq.slices().iter().map(|s| shape_function(s)).collect();
    ShapeMatrix::from_rows(rows?)
}

/// Everything the texture stage derives from the reference terrain.
#[derive(Debug, Clone, PartialEq)]
pub struct MtmReference {
    /// Common profile resolution all terrains are resampled to.
    pub target_n: usize,
    /// Retained singular values, descending.
    pub singular_values: Vec<f64>,
    /// Retained right singular vectors, one per singular value.
    pub components: Vec<Vec<f64>>,
    /// The reference's own loading matrix.
    pub loading: LoadingMatrix,
}

/// Decompose the reference sequence into its principal shape components.
pub fn build_reference(ref_slices: &SliceSequence, cfg: &MtmConfig) -> Result<MtmReference> {
    let target_n = match cfg.target_n_override {
        Some(n) => {
            if n < 3 {
                return Err(Error::InvalidParameter(format!(
                    "pinned resolution {n} cannot carry turning angles"
                )));
            }
            n
        }
        // A two-point resolution can satisfy the deviation bound but has
        // no interior point to turn at; three is the working minimum.
        None => choose_target_resolution(ref_slices, cfg.deviation_bound)?.max(3),
    };
    let resampled = resample_sequence(ref_slices, target_n)?;
    let shape = shape_matrix(&resampled)?;
    let truncation = match cfg.k_pc_override {
        Some(k) => svd_truncate(&shape, 1.0)?.retake(k)?,
        None => svd_truncate(&shape, cfg.variance_keep)?,
    };
    let loading = loading_matrix(&shape, &truncation.components)?;
    Ok(MtmReference {
        target_n,
        singular_values: truncation.singular_values,
        components: truncation.components,
        loading,
    })
}

/// Ranked survivors of the texture stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MtmRanking {
    /// Descending by similarity, zero-norm loadings last, ties by id.
    pub scores: Vec<MtmScore>,
    /// Ids whose sequences could not be shaped against the reference.
    pub skipped: Vec<usize>,
}

/// Project every candidate onto the reference components and keep the
/// `keep` most similar.
pub fn mtm_filter(
    candidates: &[(usize, SliceSequence)],
    reference: &MtmReference,
    keep: usize,
) -> Result<MtmRanking> {
    if keep == 0 {
        return Err(Error::InvalidParameter("keep count must be at least 1".into()));
    }
    let outcomes: Vec<(usize, Option<LoadingMatrix>)> = candidates
        .par_iter()
        .map(|(id, seq)| {
            let loading = resample_sequence(seq, reference.target_n)
                .and_then(|r| shape_matrix(&r))
                .and_then(|shape| loading_matrix(&shape, &reference.components));
            (*id, loading.ok())
        })
        .collect();

    let mut loadings = Vec::new();
    let mut skipped = Vec::new();
    for (id, outcome) in outcomes {
        match outcome {
            Some(l) => loadings.push((id, l)),
            None => skipped.push(id),
        }
    }
    let scores = cosine_rank(&loadings, &reference.loading, keep)?;
    Ok(MtmRanking { scores, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn linear_ramp_resamples_exactly() {
        let profile: Vec<f64> = (0..50).map(|i| 3.0 * i as f64 + 7.0).collect();
        for n in [2, 5, 17, 50] {
            let (resampled, dev) = mae_resample(&profile, n).unwrap();
            assert_eq!(resampled.len(), n);
            assert_abs_diff_eq!(dev, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_resolution_reconstructs_bitwise() {
        let profile = vec![4.0, -2.5, 9.75, 0.5, 1.0];
        let (resampled, dev) = mae_resample(&profile, 5).unwrap();
        assert_eq!(resampled, profile);
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn sine_deviation_matches_direct_oracle() {
        let profile: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin() * 40.0).collect();
        let (resampled, dev) = mae_resample(&profile, 16).unwrap();

        let positions: Vec<f64> = (0..16).map(|i| i as f64 * 63.0 / 15.0).collect();
        let mut err_sum = 0.0;
        for (j, &y) in profile.iter().enumerate() {
            let x = j as f64;
            let seg = positions.windows(2).position(|w| x >= w[0] && x <= w[1]).unwrap();
            let (x0, x1) = (positions[seg], positions[seg + 1]);
            let t = (x - x0) / (x1 - x0);
            let reconstructed = resampled[seg] * (1.0 - t) + resampled[seg + 1] * t;
            err_sum += (y - reconstructed).abs();
        }
        let span = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - profile.iter().cloned().fold(f64::INFINITY, f64::min);
        let oracle = err_sum / 64.0 / span;
        assert_abs_diff_eq!(dev, oracle, epsilon = 1e-12);
    }

    #[test]
    fn constant_profile_is_rejected() {
        let err = mae_resample(&[5.0; 10], 4).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    fn seq_of(slices: Vec<Vec<f64>>) -> SliceSequence {
        let w = slices[0].len();
        SliceSequence::from_slices(slices, w, 100.0).unwrap()
    }

    #[test]
    fn linear_slices_need_only_two_points() {
        let seq = seq_of(vec![
            (0..40).map(|i| i as f64 * 2.0).collect(),
            (0..40).map(|i| 80.0 - i as f64).collect(),
        ]);
        assert_eq!(choose_target_resolution(&seq, 0.015).unwrap(), 2);
    }

    #[test]
    fn zero_bound_forces_original_length() {
        let curved: Vec<f64> = (0..40).map(|i| (i as f64).powi(2)).collect();
        let seq = seq_of(vec![curved]);
        assert_eq!(choose_target_resolution(&seq, 0.0).unwrap(), 40);
    }

    #[test]
    fn chosen_resolution_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let slices: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                let phase: f64 = rng.random_range(0.0..PI);
                let depth: f64 = rng.random_range(150.0..300.0);
                (0..120)
                    .map(|i| {
                        let t = i as f64 / 119.0;
                        -depth * (PI * t + phase).sin().abs() + 20.0 * (7.0 * PI * t).sin()
                    })
                    .collect()
            })
            .collect();
        let seq = seq_of(slices.clone());
        let chosen = choose_target_resolution(&seq, 0.015).unwrap();
        assert!(chosen > 2, "curved profiles should need more than two points");

        for n in 2..chosen {
            let any_over = slices.iter().any(|s| mae_resample(s, n).unwrap().1 > 0.015);
            assert!(any_over, "resolution {n} already satisfies the bound, {chosen} is not minimal");
        }
        for s in &slices {
            assert!(mae_resample(s, chosen).unwrap().1 <= 0.015);
        }
    }

    #[test]
    fn straight_profiles_have_zero_turning_angles() {
        for slope in [-3.0, 0.0, 0.25, 8.0] {
            let profile: Vec<f64> = (0..12).map(|i| slope * i as f64).collect();
            let angles = shape_function(&profile).unwrap();
            assert_eq!(angles.len(), 10);
            assert!(angles.iter().all(|&a| a == 0.0), "slope {slope} gave {angles:?}");
        }
    }

    #[test]
    fn v_profile_turns_once_at_the_vertex() {
        let angles = shape_function(&[2.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(angles.len(), 3);
        assert_eq!(angles[0], 0.0);
        assert_eq!(angles[2], 0.0);
        assert_abs_diff_eq!(angles[1], PI / 2.0, epsilon = 1e-12);

        let ridge = shape_function(&[0.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(ridge[1], -PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn shape_is_offset_invariant_and_reverses_cleanly() {
        let profile = vec![0.0, 1.0, 3.0, 2.0, 5.0, 4.0];
        let base = shape_function(&profile).unwrap();

        let shifted: Vec<f64> = profile.iter().map(|v| v + 128.0).collect();
        assert_eq!(shape_function(&shifted).unwrap(), base);

        let reversed: Vec<f64> = profile.iter().rev().cloned().collect();
        let mut expected = base.clone();
        expected.reverse();
        let got = shape_function(&reversed).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn paper_scale_configuration_produces_expected_dims() {
        let profile: Vec<f64> = (0..181).map(|i| ((i as f64) * 0.11).sin() * 50.0).collect();
        assert_eq!(shape_function(&profile).unwrap().len(), 179);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let slices: Vec<Vec<f64>> = (0..25)
            .map(|_| {
                let a: f64 = rng.random_range(50.0..250.0);
                let p: f64 = rng.random_range(0.0..PI);
                (0..200)
                    .map(|i| {
                        let t = i as f64 / 199.0;
                        -a * (PI * t + p).sin().abs() + rng.random_range(-4.0..4.0)
                    })
                    .collect()
            })
            .collect();
        let seq = seq_of(slices);
        let cfg = MtmConfig {
            target_n_override: Some(181),
            k_pc_override: Some(19),
            ..MtmConfig::default()
        };
        let reference = build_reference(&seq, &cfg).unwrap();
        assert_eq!(reference.target_n, 181);
        assert_eq!(reference.components.len(), 19);
        assert_eq!(reference.components[0].len(), 179);
        assert_eq!(reference.loading.k_pc(), 19);
        assert_eq!(reference.loading.cols(), 179);
    }

    #[test]
    fn shape_matrix_stacks_identical_rows_for_identical_slices() {
        let slice: Vec<f64> = (0..20).map(|i| ((i as f64) * 0.4).cos() * 10.0).collect();
        let seq = seq_of(vec![slice; 4]);
        let m = shape_matrix(&seq).unwrap();
        assert_eq!(m.rows(), 4);
        assert_eq!(m.cols(), 18);
        for i in 1..4 {
            assert_eq!(m.row(i), m.row(0));
        }

        let planar = seq_of(vec![(0..20).map(|i| i as f64 * 1.5).collect(); 3]);
        let zeros = shape_matrix(&planar).unwrap();
        assert!(zeros.data().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn filter_ranks_self_match_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let make_seq = |rng: &mut ChaCha8Rng, depth: f64, bumps: f64| {
            let slices: Vec<Vec<f64>> = (0..12)
                .map(|_| {
                    let jitter: f64 = rng.random_range(-0.05..0.05);
                    (0..38)
                        .map(|i| {
                            let t = i as f64 / 37.0;
                            -depth * (PI * (t + jitter)).sin().abs()
                                + bumps * (5.0 * PI * t).sin()
                        })
                        .collect()
                })
                .collect();
            seq_of(slices)
        };
        let ref_seq = make_seq(&mut rng, 260.0, 12.0);
        let reference = build_reference(&ref_seq, &MtmConfig::default()).unwrap();

        let mut candidates = vec![(0usize, ref_seq.clone())];
        for id in 1..40 {
            let depth = rng.random_range(80.0..400.0);
            let bumps = rng.random_range(0.0..30.0);
            candidates.push((id, make_seq(&mut rng, depth, bumps)));
        }
        let ranking = mtm_filter(&candidates, &reference, 1000).unwrap();
        assert_eq!(ranking.scores.len(), 40);
        assert!(ranking.skipped.is_empty());
        assert_eq!(ranking.scores[0].id, 0);
        assert_abs_diff_eq!(ranking.scores[0].similarity, 1.0, epsilon = 1e-9);

        let top5 = mtm_filter(&candidates, &reference, 5).unwrap();
        assert_eq!(top5.scores.len(), 5);
        assert_eq!(&top5.scores[..], &ranking.scores[..5]);
    }
}
