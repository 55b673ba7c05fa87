//! Training loop, early stopping, k-fold cross-validation, and the binary
//! classification metrics they report.
//!
//! Training is single-threaded and fully determined by the seed: one
//! generator drives the validation split, parameter initialization, epoch
//! shuffles, and dropout draws, in that fixed order.

use super::backprop::{
    clip_gradients, forward_batch, loss_and_grads, update_running_stats, AdamState,
};
use super::{bce_loss, GraphTensors, LabeledPair, Mode, ModelParams, NetDims, TrainConfig};
use crate::graph::TerrainGraph;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Loss and validation quality after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// One-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub train_loss: f64,
    /// Validation loss in eval mode after the epoch.
    pub val_loss: f64,
    /// Validation F1 at threshold 0.5 after the epoch.
    pub val_f1: f64,
}

/// A finished training run: the best-validation parameters and the full
/// epoch history, including epochs after the best one.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    /// One-based epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Validation loss at that epoch.
    pub best_val_loss: f64,
}

/// Accuracy, precision, recall, and F1 for one binary evaluation.
///
/// Precision, recall, and F1 are zero by convention whenever their
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    /// Metrics from raw confusion counts. At least one count must be
    /// nonzero.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<Self> {
        let total = tp + fp + fn_ + tn;
        if total == 0 {
            return Err(Error::InvalidParameter(
                "confusion counts are all zero".into(),
            ));
        }
        let accuracy = (tp + tn) as f64 / total as f64;
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(ClassMetrics {
            accuracy,
            precision,
            recall,
            f1,
        })
    }
}

/// Thresholds scores against labels and reports the resulting metrics.
/// A score at or above the threshold predicts the positive class.
pub fn binary_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ClassMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidParameter(
            "metrics over an empty evaluation are undefined".into(),
        ));
    }
    if !threshold.is_finite() {
        return Err(Error::InvalidParameter("threshold must be finite".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        match (predicted, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    ClassMetrics::from_counts(tp, fp, fn_, tn)
}

/// Splits pair indices into `folds` disjoint groups whose sizes differ by
/// at most one and whose positive counts differ by at most one, shuffled by
/// the seed. Fold contents are sorted for stable output.
pub fn stratified_folds(
    pairs: &[LabeledPair],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if folds == 0 {
        return Err(Error::InvalidParameter("fold count must be nonzero".into()));
    }
    if pairs.len() < folds {
        return Err(Error::InvalidParameter(format!(
            "{} pairs cannot fill {} folds",
            pairs.len(),
            folds
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label).collect();
    let mut negatives: Vec<usize> = (0..pairs.len()).filter(|&i| !pairs[i].label).collect();
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);

    let mut assignment = vec![Vec::new(); folds];
    for (i, &idx) in positives.iter().enumerate() {
        assignment[i % folds].push(idx);
    }
    // Continue the round-robin where the positives left off so total fold
    // sizes stay within one of each other.
    let offset = positives.len() % folds;
    for (i, &idx) in negatives.iter().enumerate() {
        assignment[(offset + i) % folds].push(idx);
    }
    for fold in &mut assignment {
        fold.sort_unstable();
    }
    Ok(assignment)
}

/// Stratified holdout: moves about `fraction` of each class (at least one
/// pair of any class that is present) into the validation set.
pub(crate) fn holdout_split(
    pairs: &[LabeledPair],
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut positives: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label).collect();
    let mut negatives: Vec<usize> = (0..pairs.len()).filter(|&i| !pairs[i].label).collect();
    positives.shuffle(rng);
    negatives.shuffle(rng);
    let take = |class: &[usize]| -> usize {
        if class.is_empty() {
            0
        } else {
            ((class.len() as f64 * fraction).round() as usize).clamp(1, class.len())
        }
    };
    let vp = take(&positives);
    let vn = take(&negatives);
    let mut val: Vec<usize> = positives.split_off(positives.len() - vp);
    val.extend(negatives.split_off(negatives.len() - vn));
    let mut train: Vec<usize> = positives;
    train.extend(negatives);
    if train.is_empty() {
        return Err(Error::InvalidParameter(
            "dataset too small to hold out a validation set".into(),
        ));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn eval_scores(
    pairs: &[LabeledPair],
    tensors: &[GraphTensors],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = forward_batch(pairs, tensors, params, Mode::Eval, &mut rng)?;
    Ok(cache.scores)
}

/// Trains on an explicit train/validation split.
///
/// Each epoch shuffles the training pairs, steps AdamW once per batch with
/// the global gradient norm clipped, advances the batch norm running
/// statistics, then measures validation loss and F1 in eval mode. Training
/// stops once validation loss has not improved for `patience` consecutive
/// epochs (zero patience stops after the first epoch) or at `max_epochs`.
/// The returned parameters are the snapshot from the best-validation epoch.
pub fn train_split(
    train_pairs: &[LabeledPair],
    val_pairs: &[LabeledPair],
    graphs: &[TerrainGraph],
    dims: &NetDims,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::InvalidParameter(
            "training and validation sets must both be non-empty".into(),
        ));
    }
    for p in train_pairs.iter().chain(val_pairs) {
        if p.a >= graphs.len() || p.b >= graphs.len() {
            return Err(Error::InvalidParameter(format!(
                "pair ({}, {}) indexes outside the {} available graphs",
                p.a,
                p.b,
                graphs.len()
            )));
        }
    }
    let tensors: Vec<GraphTensors> = graphs.iter().map(GraphTensors::from_graph).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(dims, &mut rng)?;
    let mut adam = AdamState::new(&params);

    let val_labels: Vec<bool> = val_pairs.iter().map(|p| p.label).collect();
    let val_targets: Vec<f64> = val_pairs.iter().map(|p| p.target()).collect();

    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stale_epochs = 0usize;

    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledPair> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let cache = forward_batch(&batch, &tensors, &params, Mode::Train, &mut rng)?;
            let (loss, mut grads) = loss_and_grads(&cache, &batch, &tensors, &params)?;
            clip_gradients(&mut grads, cfg.clip_norm);
            adam.step(&mut params, &grads, cfg.learning_rate, cfg.weight_decay);
            update_running_stats(&mut params.mlp, &cache);
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_pairs.len() as f64;

        let scores = eval_scores(val_pairs, &tensors, &params)?;
        let val_loss = bce_loss(&scores, &val_targets)?;
        let val_f1 = binary_metrics(&scores, &val_labels, 0.5)?.f1;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_f1,
        });

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }
        if stale_epochs >= cfg.patience {
            break;
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_loss,
    })
}

/// Trains with an internal stratified 15% validation holdout.
pub fn train(
    pairs: &[LabeledPair],
    graphs: &[TerrainGraph],
    dims: &NetDims,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two pairs to split off a validation set".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, val_idx) = holdout_split(pairs, 0.15, &mut rng)?;
    let train_pairs: Vec<LabeledPair> = train_idx.iter().map(|&i| pairs[i]).collect();
    let val_pairs: Vec<LabeledPair> = val_idx.iter().map(|&i| pairs[i]).collect();
    train_split(&train_pairs, &val_pairs, graphs, dims, cfg)
}

/// One fold's held-out evaluation.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    /// Zero-based fold index.
    pub fold: usize,
    /// Metrics on the held-out fold.
    pub metrics: ClassMetrics,
    /// Metrics of the same parameters on the fold's training pairs, for
    /// spotting over- or underfitting.
    pub train_metrics: ClassMetrics,
    /// Epoch the fold's best parameters came from.
    pub best_epoch: usize,
}

/// Cross-validation summary: per-fold metrics plus their mean and sample
/// standard deviation.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: Vec<FoldOutcome>,
    pub mean: ClassMetrics,
    pub std: ClassMetrics,
}

/// Stratified k-fold cross-validation. Each fold trains a fresh model on
/// the other folds, using the held-out fold for early stopping, then scores
/// it on that fold at threshold 0.5.
pub fn kfold_evaluate(
    pairs: &[LabeledPair],
    graphs: &[TerrainGraph],
    dims: &NetDims,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    cfg.validate()?;
    if cfg.folds < 2 {
        return Err(Error::InvalidParameter(
            "cross-validation needs at least two folds".into(),
        ));
    }
    let assignment = stratified_folds(pairs, cfg.folds, cfg.seed)?;
    let tensors: Vec<GraphTensors> = graphs.iter().map(GraphTensors::from_graph).collect();

    let mut folds = Vec::with_capacity(cfg.folds);
    for (f, test_idx) in assignment.iter().enumerate() {
        let test_pairs: Vec<LabeledPair> = test_idx.iter().map(|&i| pairs[i]).collect();
        let train_pairs: Vec<LabeledPair> = assignment
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().map(|&i| pairs[i]))
            .collect();
        if train_pairs.is_empty() || test_pairs.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "fold {f} leaves an empty train or test set"
            )));
        }
        let outcome = train_split(&train_pairs, &test_pairs, graphs, dims, cfg)?;
        let scores = eval_scores(&test_pairs, &tensors, &outcome.params)?;
        let labels: Vec<bool> = test_pairs.iter().map(|p| p.label).collect();
        let metrics = binary_metrics(&scores, &labels, 0.5)?;
        let train_scores = eval_scores(&train_pairs, &tensors, &outcome.params)?;
        let train_labels: Vec<bool> = train_pairs.iter().map(|p| p.label).collect();
        let train_metrics = binary_metrics(&train_scores, &train_labels, 0.5)?;
        folds.push(FoldOutcome {
            fold: f,
            metrics,
            train_metrics,
            best_epoch: outcome.best_epoch,
        });
    }

    let pick = |get: fn(&ClassMetrics) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = folds.iter().map(|f| get(&f.metrics)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        (mean, var.sqrt())
    };
    let (acc_m, acc_s) = pick(|m| m.accuracy);
    let (pre_m, pre_s) = pick(|m| m.precision);
    let (rec_m, rec_s) = pick(|m| m.recall);
    let (f1_m, f1_s) = pick(|m| m.f1);

    Ok(CvReport {
        folds,
        mean: ClassMetrics {
            accuracy: acc_m,
            precision: pre_m,
            recall: rec_m,
            f1: f1_m,
        },
        std: ClassMetrics {
            accuracy: acc_s,
            precision: pre_s,
            recall: rec_s,
            f1: f1_s,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::testgraphs::*;
    use super::*;
    use rand::Rng;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            batch_size: 8,
            clip_norm: 2.0,
            patience: 50,
            max_epochs: 4,
            seed: 11,
            folds: 2,
        }
    }

    fn small_dataset() -> (Vec<LabeledPair>, Vec<crate::graph::TerrainGraph>) {
        let graphs = vec![path_graph(), ring_graph(), zero_graph()];
        let pairs = vec![
            LabeledPair::new(0, 0, true),
            LabeledPair::new(1, 1, true),
            LabeledPair::new(0, 1, false),
            LabeledPair::new(1, 0, false),
            LabeledPair::new(0, 2, false),
            LabeledPair::new(1, 2, false),
            LabeledPair::new(2, 2, true),
            LabeledPair::new(2, 0, false),
        ];
        (pairs, graphs)
    }

    #[test]
    fn metrics_match_hand_computed_confusion() {
        let m = ClassMetrics::from_counts(3, 1, 1, 5).unwrap();
        assert!((m.accuracy - 0.8).abs() < 1e-15);
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.f1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_denominators_give_zero_by_convention() {
        let m = ClassMetrics::from_counts(0, 0, 0, 7).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 1.0);
        assert!(ClassMetrics::from_counts(0, 0, 0, 0).is_err());
    }

    #[test]
    fn f1_is_the_harmonic_mean_of_precision_and_recall() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let tp = rng.random_range(0..20u64);
            let fp = rng.random_range(0..20u64);
            let fn_ = rng.random_range(0..20u64);
            let tn = rng.random_range(0..20u64);
            if tp + fp + fn_ + tn == 0 {
                continue;
            }
            let m = ClassMetrics::from_counts(tp, fp, fn_, tn).unwrap();
            if m.precision + m.recall > 0.0 {
                let expected = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                assert!((m.f1 - expected).abs() < 1e-12);
            } else {
                assert_eq!(m.f1, 0.0);
            }
        }
    }

    #[test]
    fn threshold_is_inclusive_for_the_positive_class() {
        let m = binary_metrics(&[0.5, 0.49], &[true, false], 0.5).unwrap();
        assert_eq!(m.accuracy, 1.0);
        let m = binary_metrics(&[0.5], &[false], 0.5).unwrap();
        assert_eq!(m.accuracy, 0.0);
    }

    #[test]
    fn binary_metrics_validate_inputs() {
        assert!(binary_metrics(&[0.5], &[], 0.5).is_err());
        assert!(binary_metrics(&[], &[], 0.5).is_err());
        assert!(binary_metrics(&[0.5], &[true], f64::NAN).is_err());
    }

    #[test]
    fn stratified_folds_balance_sizes_and_classes() {
        let mut pairs = Vec::new();
        for i in 0..23 {
            pairs.push(LabeledPair::new(i, i, true));
        }
        for i in 0..19 {
            pairs.push(LabeledPair::new(i, i + 1, false));
        }
        let folds = stratified_folds(&pairs, 5, 99).unwrap();
        assert_eq!(folds.len(), 5);

        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        let pos_counts: Vec<usize> = folds
            .iter()
            .map(|f| f.iter().filter(|&&i| pairs[i].label).count())
            .collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(pos_counts.iter().max().unwrap() - pos_counts.iter().min().unwrap() <= 1);

        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..pairs.len()).collect();
        assert_eq!(all, expected);

        assert_eq!(folds, stratified_folds(&pairs, 5, 99).unwrap());
        assert_ne!(folds, stratified_folds(&pairs, 5, 100).unwrap());
    }

    #[test]
    fn stratified_folds_reject_bad_fold_counts() {
        let pairs = vec![LabeledPair::new(0, 0, true); 3];
        assert!(stratified_folds(&pairs, 0, 1).is_err());
        assert!(stratified_folds(&pairs, 4, 1).is_err());
    }

    #[test]
    fn holdout_keeps_both_classes_when_present() {
        let mut pairs = Vec::new();
        for i in 0..10 {
            pairs.push(LabeledPair::new(i, i, true));
        }
        for i in 0..10 {
            pairs.push(LabeledPair::new(i, i + 1, false));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (train_idx, val_idx) = holdout_split(&pairs, 0.15, &mut rng).unwrap();
        assert_eq!(train_idx.len() + val_idx.len(), pairs.len());
        // 15% of ten rounds to two per class, at least one of each.
        let val_pos = val_idx.iter().filter(|&&i| pairs[i].label).count();
        let val_neg = val_idx.len() - val_pos;
        assert!(val_pos >= 1 && val_neg >= 1);
        for i in &val_idx {
            assert!(!train_idx.contains(i));
        }
    }

    #[test]
    fn patience_zero_trains_exactly_one_epoch() {
        let (pairs, graphs) = small_dataset();
        let mut cfg = tiny_cfg();
        cfg.patience = 0;
        cfg.max_epochs = 50;
        let out = train(&pairs, &graphs, &tiny_dims(), &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn training_is_bitwise_reproducible_per_seed() {
        let (pairs, graphs) = small_dataset();
        let cfg = tiny_cfg();
        let a = train(&pairs, &graphs, &tiny_dims(), &cfg).unwrap();
        let b = train(&pairs, &graphs, &tiny_dims(), &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);

        let mut other = cfg.clone();
        other.seed = 12;
        let c = train(&pairs, &graphs, &tiny_dims(), &other).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn returned_params_reproduce_the_best_validation_loss() {
        let (pairs, graphs) = small_dataset();
        let mut cfg = tiny_cfg();
        cfg.max_epochs = 6;
        let train_pairs = &pairs[..6];
        let val_pairs = &pairs[6..];
        let out = train_split(train_pairs, val_pairs, &graphs, &tiny_dims(), &cfg).unwrap();

        let min_val = out
            .history
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_val_loss, min_val);
        assert_eq!(out.history[out.best_epoch - 1].val_loss, out.best_val_loss);

        // Rescoring the validation set with the returned snapshot must give
        // back exactly the recorded best loss.
        let tensors: Vec<GraphTensors> = graphs.iter().map(GraphTensors::from_graph).collect();
        let scores = eval_scores(val_pairs, &tensors, &out.params).unwrap();
        let targets: Vec<f64> = val_pairs.iter().map(|p| p.target()).collect();
        let recomputed = bce_loss(&scores, &targets).unwrap();
        assert_eq!(recomputed.to_bits(), out.best_val_loss.to_bits());
    }

    #[test]
    fn train_rejects_degenerate_datasets() {
        let (pairs, graphs) = small_dataset();
        assert!(train(&pairs[..1], &graphs, &tiny_dims(), &tiny_cfg()).is_err());
        let bad = vec![LabeledPair::new(0, 9, true), LabeledPair::new(0, 0, false)];
        assert!(train(&bad, &graphs, &tiny_dims(), &tiny_cfg()).is_err());
        assert!(train_split(&pairs, &[], &graphs, &tiny_dims(), &tiny_cfg()).is_err());
    }

    #[test]
    fn kfold_on_trivially_positive_self_pairs_is_perfect_and_stable() {
        // Every pair is the same self-pair with the same label, so each
        // fold's model sees the zero embedding difference and classifies it
        // positive; all folds agree exactly, giving zero deviation.
        let graphs = vec![path_graph()];
        let pairs = vec![LabeledPair::new(0, 0, true); 5];
        let mut cfg = tiny_cfg();
        cfg.folds = 5;
        cfg.max_epochs = 3;
        let report = kfold_evaluate(&pairs, &graphs, &tiny_dims(), &cfg).unwrap();
        assert_eq!(report.folds.len(), 5);
        assert_eq!(report.mean.accuracy, 1.0);
        assert_eq!(report.mean.f1, 1.0);
        assert_eq!(report.std.accuracy, 0.0);
        assert_eq!(report.std.f1, 0.0);
    }

    #[test]
    fn kfold_rejects_bad_fold_configs() {
        let (pairs, graphs) = small_dataset();
        let mut cfg = tiny_cfg();
        cfg.folds = 1;
        assert!(kfold_evaluate(&pairs, &graphs, &tiny_dims(), &cfg).is_err());
        cfg.folds = pairs.len() + 1;
        assert!(kfold_evaluate(&pairs, &graphs, &tiny_dims(), &cfg).is_err());
    }

    #[test]
    fn separable_families_reach_high_training_f1() {
        let graphs = family_graphs();
        let pairs = family_pairs(200);
        let positives = pairs.iter().filter(|p| p.label).count();
        assert!(positives > 50 && positives < 150, "{positives} positives");

        let dims = NetDims {
            input: 5,
            hidden: 32,
            fuse1: 32,
            fuse2: 16,
        };
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            batch_size: 32,
            clip_norm: 2.0,
            patience: 200,
            max_epochs: 60,
            seed: 5,
            folds: 5,
        };
        let out = train(&pairs, &graphs, &dims, &cfg).unwrap();

        let tensors: Vec<GraphTensors> = graphs.iter().map(GraphTensors::from_graph).collect();
        let scores = eval_scores(&pairs, &tensors, &out.params).unwrap();
        let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
        let metrics = binary_metrics(&scores, &labels, 0.5).unwrap();
        assert!(
            metrics.f1 >= 0.95,
            "training F1 {} below 0.95 (accuracy {})",
            metrics.f1,
            metrics.accuracy
        );
    }
}
