//! Training internals: cached forward passes, hand-written reverse mode
//! gradients, gradient clipping, and the AdamW update.
//!
//! The forward functions never mutate parameters. Batch norm running
//! statistics are advanced explicitly by [`update_running_stats`] so that
//! scoring stays a pure function of its inputs.

use super::{
    sigmoid, BatchNorm, GcnParams, GraphTensors, LabeledPair, MlpParams, Mode, ModelParams,
    BCE_EPS,
};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Gradients for every trainable tensor, in the same shapes as the
/// parameters they belong to. Running statistics have no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub(crate) gcn_w1: DMatrix<f64>,
    pub(crate) gcn_w2: DMatrix<f64>,
    pub(crate) gcn_w3: DMatrix<f64>,
    pub(crate) gcn_pool: DMatrix<f64>,
    pub(crate) mlp_w1: DMatrix<f64>,
    pub(crate) mlp_b1: DMatrix<f64>,
    pub(crate) bn1_gamma: DMatrix<f64>,
    pub(crate) bn1_beta: DMatrix<f64>,
    pub(crate) mlp_w2: DMatrix<f64>,
    pub(crate) mlp_b2: DMatrix<f64>,
    pub(crate) bn2_gamma: DMatrix<f64>,
    pub(crate) bn2_beta: DMatrix<f64>,
    pub(crate) mlp_w3: DMatrix<f64>,
    pub(crate) mlp_b3: DMatrix<f64>,
}

impl ModelGrads {
    /// All-zero gradients shaped like the given parameters.
    pub fn zeros_like(params: &ModelParams) -> Self {
        let z = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
        ModelGrads {
            gcn_w1: z(&params.gcn.w1),
            gcn_w2: z(&params.gcn.w2),
            gcn_w3: z(&params.gcn.w3),
            gcn_pool: z(&params.gcn.pool),
            mlp_w1: z(&params.mlp.w1),
            mlp_b1: z(&params.mlp.b1),
            bn1_gamma: z(&params.mlp.bn1.gamma),
            bn1_beta: z(&params.mlp.bn1.beta),
            mlp_w2: z(&params.mlp.w2),
            mlp_b2: z(&params.mlp.b2),
            bn2_gamma: z(&params.mlp.bn2.gamma),
            bn2_beta: z(&params.mlp.bn2.beta),
            mlp_w3: z(&params.mlp.w3),
            mlp_b3: z(&params.mlp.b3),
        }
    }

    pub(crate) fn tensors(&self) -> [&DMatrix<f64>; 14] {
        [
            &self.gcn_w1,
            &self.gcn_w2,
            &self.gcn_w3,
            &self.gcn_pool,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.bn1_gamma,
            &self.bn1_beta,
            &self.mlp_w2,
            &self.mlp_b2,
            &self.bn2_gamma,
            &self.bn2_beta,
            &self.mlp_w3,
            &self.mlp_b3,
        ]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut DMatrix<f64>; 14] {
        [
            &mut self.gcn_w1,
            &mut self.gcn_w2,
            &mut self.gcn_w3,
            &mut self.gcn_pool,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.bn1_gamma,
            &mut self.bn1_beta,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
            &mut self.bn2_gamma,
            &mut self.bn2_beta,
            &mut self.mlp_w3,
            &mut self.mlp_b3,
        ]
    }
}

impl ModelParams {
    /// Trainable tensors in the fixed order shared with [`ModelGrads`].
    pub(crate) fn trainable_mut(&mut self) -> [&mut DMatrix<f64>; 14] {
        let ModelParams { gcn, mlp } = self;
        [
            &mut gcn.w1,
            &mut gcn.w2,
            &mut gcn.w3,
            &mut gcn.pool,
            &mut mlp.w1,
            &mut mlp.b1,
            &mut mlp.bn1.gamma,
            &mut mlp.bn1.beta,
            &mut mlp.w2,
            &mut mlp.b2,
            &mut mlp.bn2.gamma,
            &mut mlp.bn2.beta,
            &mut mlp.w3,
            &mut mlp.b3,
        ]
    }
}

/// Euclidean norm over every gradient entry at once.
pub fn global_grad_norm(grads: &ModelGrads) -> f64 {
    grads
        .tensors()
        .iter()
        .map(|t| t.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scales all gradients down so their global norm is at most `max_norm`.
/// Returns the norm before clipping. Gradients at or under the ceiling are
/// left untouched.
pub fn clip_gradients(grads: &mut ModelGrads, max_norm: f64) -> f64 {
    let norm = global_grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            for v in t.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// First and second moment estimates for AdamW, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ModelGrads,
    v: ModelGrads,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: ModelGrads::zeros_like(params),
            v: ModelGrads::zeros_like(params),
            t: 0,
        }
    }

    /// One AdamW update with decoupled weight decay:
    /// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + decay * p)`.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelGrads, lr: f64, decay: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let ps = params.trainable_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + decay * p[i]);
            }
        }
    }
}

/// One convolution layer's cached intermediates.
struct LayerCache {
    /// Laplacian times the layer input, before the weight multiply.
    lh: DMatrix<f64>,
    /// Pre-activation `lh * w`.
    pre: DMatrix<f64>,
    /// Dropout multipliers, present only when dropout was active.
    mask: Option<DMatrix<f64>>,
    /// Layer output after ReLU and dropout.
    h: DMatrix<f64>,
}

/// Everything one encoder pass caches for its backward pass.
pub(crate) struct EncodeCache {
    layers: Vec<LayerCache>,
    scores: Vec<f64>,
    kept: Vec<usize>,
    pub embedding: DVector<f64>,
}

fn draw_dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let scale = 1.0 / (1.0 - rate);
    let mut mask = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            mask[(r, c)] = if rng.random::<f64>() < rate { 0.0 } else { scale };
        }
    }
    mask
}

/// Runs the encoder on one graph, caching intermediates. Dropout draws
/// happen only in train mode with a positive rate, in row-major layer
/// order, so the random stream is reproducible.
pub(crate) fn encode(
    tensors: &GraphTensors,
    gcn: &GcnParams,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<EncodeCache> {
    if tensors.features.ncols() != gcn.w1.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "graph features have width {}, first convolution expects {}",
            tensors.features.ncols(),
            gcn.w1.nrows()
        )));
    }
    let n = tensors.features.nrows();
    let mut h = tensors.features.clone();
    let mut layers = Vec::with_capacity(3);
    for w in [&gcn.w1, &gcn.w2, &gcn.w3] {
        let lh = &tensors.laplacian * &h;
        let pre = &lh * w;
        let relu = pre.map(|v| if v > 0.0 { v } else { 0.0 });
        let (mask, out) = if mode == Mode::Train && gcn.dropout > 0.0 {
            let mask = draw_dropout_mask(relu.nrows(), relu.ncols(), gcn.dropout, rng);
            let out = relu.component_mul(&mask);
            (Some(mask), out)
        } else {
            (None, relu)
        };
        h = out.clone();
        layers.push(LayerCache { lh, pre, mask, h: out });
    }

    let hidden = gcn.w3.ncols();
    let h3 = &layers[2].h;
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..hidden {
                s += h3[(i, j)] * gcn.pool[(j, 0)];
            }
            s
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let keep = super::pool_keep(n);
    let kept: Vec<usize> = order[..keep].to_vec();

    let mut embedding = DVector::zeros(hidden);
    for &i in &kept {
        let gate = sigmoid(scores[i]);
        for j in 0..hidden {
            embedding[j] += h3[(i, j)] * gate / keep as f64;
        }
    }
    Ok(EncodeCache {
        layers,
        scores,
        kept,
        embedding,
    })
}

/// Eval-mode embedding without keeping the cache alive.
pub(crate) fn encode_eval(tensors: &GraphTensors, gcn: &GcnParams) -> Result<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(encode(tensors, gcn, Mode::Eval, &mut rng)?.embedding)
}

/// Eval-mode last-layer node features, for activation export and tests.
pub(crate) fn hidden_eval(tensors: &GraphTensors, gcn: &GcnParams) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = encode(tensors, gcn, Mode::Eval, &mut rng)?;
    Ok(cache.layers.into_iter().nth(2).expect("three layers").h)
}

/// Accumulates encoder gradients for one graph into `grads`, given the
/// gradient of the loss with respect to its embedding. Nodes dropped by
/// pooling receive no gradient; the selection itself is treated as fixed.
fn backward_encoder(
    cache: &EncodeCache,
    tensors: &GraphTensors,
    gcn: &GcnParams,
    d_embedding: &DVector<f64>,
    grads: &mut ModelGrads,
) {
    let n = tensors.features.nrows();
    let hidden = gcn.w3.ncols();
    let keep = cache.kept.len() as f64;
    let h3 = &cache.layers[2].h;

    let mut d_h = DMatrix::zeros(n, hidden);
    for &i in &cache.kept {
        let gate = sigmoid(cache.scores[i]);
        let mut d_gate = 0.0;
        for j in 0..hidden {
            d_h[(i, j)] += d_embedding[j] * gate / keep;
            d_gate += d_embedding[j] * h3[(i, j)] / keep;
        }
        let d_score = d_gate * gate * (1.0 - gate);
        for j in 0..hidden {
            d_h[(i, j)] += d_score * gcn.pool[(j, 0)];
            grads.gcn_pool[(j, 0)] += d_score * h3[(i, j)];
        }
    }

    let weights = [&gcn.w1, &gcn.w2, &gcn.w3];
    let grad_slots = [0usize, 1, 2];
    for layer_idx in (0..3).rev() {
        let layer = &cache.layers[layer_idx];
        let mut d_post = d_h;
        if let Some(mask) = &layer.mask {
            d_post = d_post.component_mul(mask);
        }
        let d_pre = d_post.zip_map(&layer.pre, |g, p| if p > 0.0 { g } else { 0.0 });
        let dw = layer.lh.tr_mul(&d_pre);
        let slot = grad_slots[layer_idx];
        let target = match slot {
            0 => &mut grads.gcn_w1,
            1 => &mut grads.gcn_w2,
            _ => &mut grads.gcn_w3,
        };
        *target += dw;
        if layer_idx > 0 {
            let d_lh = &d_pre * weights[layer_idx].transpose();
            d_h = &tensors.laplacian * d_lh;
        } else {
            d_h = DMatrix::zeros(0, 0);
        }
    }
}

/// One batch norm layer's cached intermediates (train mode).
struct BnCache {
    mean: DVector<f64>,
    /// Biased (population) variance over the batch.
    var: DVector<f64>,
    xhat: DMatrix<f64>,
}

fn bn_forward(z: &DMatrix<f64>, bn: &BatchNorm, mode: Mode) -> (DMatrix<f64>, BnCache) {
    let (rows, cols) = z.shape();
    let mut mean = DVector::zeros(cols);
    let mut var = DVector::zeros(cols);
    match mode {
        Mode::Train => {
            let m = rows as f64;
            for j in 0..cols {
                let mu = (0..rows).map(|i| z[(i, j)]).sum::<f64>() / m;
                let v = (0..rows).map(|i| (z[(i, j)] - mu).powi(2)).sum::<f64>() / m;
                mean[j] = mu;
                var[j] = v;
            }
        }
        Mode::Eval => {
            for j in 0..cols {
                mean[j] = bn.running_mean[(j, 0)];
                var[j] = bn.running_var[(j, 0)];
            }
        }
    }
    let mut xhat = DMatrix::zeros(rows, cols);
    let mut out = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let istd = 1.0 / (var[j] + bn.eps).sqrt();
        for i in 0..rows {
            let x = (z[(i, j)] - mean[j]) * istd;
            xhat[(i, j)] = x;
            out[(i, j)] = bn.gamma[(j, 0)] * x + bn.beta[(j, 0)];
        }
    }
    (out, BnCache { mean, var, xhat })
}

/// Gradient through a train-mode batch norm layer. Returns the gradient
/// with respect to the layer input and accumulates the affine gradients.
fn bn_backward(
    d_out: &DMatrix<f64>,
    cache: &BnCache,
    bn: &BatchNorm,
    d_gamma: &mut DMatrix<f64>,
    d_beta: &mut DMatrix<f64>,
) -> DMatrix<f64> {
    let (rows, cols) = d_out.shape();
    let m = rows as f64;
    let mut d_z = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let std = (cache.var[j] + bn.eps).sqrt();
        let gamma = bn.gamma[(j, 0)];
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xm = 0.0;
        let mut sum_xm = 0.0;
        for i in 0..rows {
            let dxhat = d_out[(i, j)] * gamma;
            let xm = cache.xhat[(i, j)] * std;
            sum_dxhat += dxhat;
            sum_dxhat_xm += dxhat * xm;
            sum_xm += xm;
            d_gamma[(j, 0)] += d_out[(i, j)] * cache.xhat[(i, j)];
            d_beta[(j, 0)] += d_out[(i, j)];
        }
        let d_var = sum_dxhat_xm * -0.5 / (std * std * std);
        let d_mean = -sum_dxhat / std + d_var * (-2.0 / m) * sum_xm;
        for i in 0..rows {
            let dxhat = d_out[(i, j)] * gamma;
            let xm = cache.xhat[(i, j)] * std;
            d_z[(i, j)] = dxhat / std + d_var * 2.0 * xm / m + d_mean / m;
        }
    }
    d_z
}

/// One fusion-head pass over a batch of embedding differences.
struct MlpCache {
    fdiff: DMatrix<f64>,
    /// First-layer pre-activations, kept so tests can recompute batch
    /// statistics independently of the normalization cache.
    #[cfg_attr(not(test), allow(dead_code))]
    z1: DMatrix<f64>,
    bn1: BnCache,
    y1: DMatrix<f64>,
    mask1: Option<DMatrix<f64>>,
    h1: DMatrix<f64>,
    bn2: BnCache,
    y2: DMatrix<f64>,
    mask2: Option<DMatrix<f64>>,
    h2: DMatrix<f64>,
}

fn add_bias_rows(z: &mut DMatrix<f64>, bias: &DMatrix<f64>) {
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            z[(i, j)] += bias[(j, 0)];
        }
    }
}

fn mlp_forward(
    fdiff: DMatrix<f64>,
    mlp: &MlpParams,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>, MlpCache) {
    let rows = fdiff.nrows();
    let mut z1 = &fdiff * &mlp.w1;
    add_bias_rows(&mut z1, &mlp.b1);
    let (y1, bn1) = bn_forward(&z1, &mlp.bn1, mode);
    let relu1 = y1.map(|v| if v > 0.0 { v } else { 0.0 });
    let (mask1, h1) = if mode == Mode::Train && mlp.dropout > 0.0 {
        let mask = draw_dropout_mask(relu1.nrows(), relu1.ncols(), mlp.dropout, rng);
        let h = relu1.component_mul(&mask);
        (Some(mask), h)
    } else {
        (None, relu1)
    };

    let mut z2 = &h1 * &mlp.w2;
    add_bias_rows(&mut z2, &mlp.b2);
    let (y2, bn2) = bn_forward(&z2, &mlp.bn2, mode);
    let relu2 = y2.map(|v| if v > 0.0 { v } else { 0.0 });
    let (mask2, h2) = if mode == Mode::Train && mlp.dropout > 0.0 {
        let mask = draw_dropout_mask(relu2.nrows(), relu2.ncols(), mlp.dropout, rng);
        let h = relu2.component_mul(&mask);
        (Some(mask), h)
    } else {
        (None, relu2)
    };

    let mut logits = Vec::with_capacity(rows);
    let mut scores = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut z = mlp.b3[(0, 0)];
        for j in 0..h2.ncols() {
            z += h2[(i, j)] * mlp.w3[(j, 0)];
        }
        logits.push(z);
        scores.push(sigmoid(z));
    }
    let cache = MlpCache {
        fdiff,
        z1,
        bn1,
        y1,
        mask1,
        h1,
        bn2,
        y2,
        mask2,
        h2,
    };
    (logits, scores, cache)
}

/// A full cached forward pass over one batch of pairs.
pub(crate) struct BatchCache {
    encodes: Vec<(EncodeCache, EncodeCache)>,
    /// Subgradient signs of `e1 - e2`, zero where the difference is zero.
    signs: DMatrix<f64>,
    mlp: MlpCache,
    pub scores: Vec<f64>,
}

/// Runs encoder and fusion head over a batch. In train mode dropout draws
/// come from `rng` in pair order, first graph then second, then the head.
pub(crate) fn forward_batch(
    pairs: &[LabeledPair],
    graphs: &[GraphTensors],
    params: &ModelParams,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<BatchCache> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    params.validate()?;
    for p in pairs {
        if p.a >= graphs.len() || p.b >= graphs.len() {
            return Err(Error::InvalidParameter(format!(
                "pair ({}, {}) indexes outside the {} available graphs",
                p.a,
                p.b,
                graphs.len()
            )));
        }
    }
    let hidden = params.gcn.w3.ncols();
    let mut encodes = Vec::with_capacity(pairs.len());
    let mut fdiff = DMatrix::zeros(pairs.len(), hidden);
    let mut signs = DMatrix::zeros(pairs.len(), hidden);
    for (row, pair) in pairs.iter().enumerate() {
        let enc_a = encode(&graphs[pair.a], &params.gcn, mode, rng)?;
        let enc_b = encode(&graphs[pair.b], &params.gcn, mode, rng)?;
        for j in 0..hidden {
            let d = enc_a.embedding[j] - enc_b.embedding[j];
            fdiff[(row, j)] = d.abs();
            signs[(row, j)] = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        encodes.push((enc_a, enc_b));
    }
    let (_logits, scores, mlp) = mlp_forward(fdiff, &params.mlp, mode, rng);
    Ok(BatchCache {
        encodes,
        signs,
        mlp,
        scores,
    })
}

/// Eval-mode score for one pair of already lowered graphs.
pub(crate) fn score_eval(
    a: &GraphTensors,
    b: &GraphTensors,
    params: &ModelParams,
) -> Result<f64> {
    let ea = encode_eval(a, &params.gcn)?;
    let eb = encode_eval(b, &params.gcn)?;
    let hidden = ea.len();
    let mut fdiff = DMatrix::zeros(1, hidden);
    for j in 0..hidden {
        fdiff[(0, j)] = (ea[j] - eb[j]).abs();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_logits, scores, _cache) = mlp_forward(fdiff, &params.mlp, Mode::Eval, &mut rng);
    Ok(scores[0])
}

/// Mean binary cross-entropy of a cached batch against 0/1 targets, plus
/// its gradients for every trainable tensor.
///
/// The loss differentiates through the same clamp the loss value uses, so
/// saturated scores contribute zero gradient.
pub(crate) fn loss_and_grads(
    cache: &BatchCache,
    pairs: &[LabeledPair],
    graphs: &[GraphTensors],
    params: &ModelParams,
) -> Result<(f64, ModelGrads)> {
    let batch = pairs.len();
    if cache.scores.len() != batch {
        return Err(Error::DimensionMismatch(format!(
            "cache holds {} scores for a batch of {batch}",
            cache.scores.len()
        )));
    }
    let targets: Vec<f64> = pairs.iter().map(|p| p.target()).collect();
    let loss = super::bce_loss(&cache.scores, &targets)?;

    let mut grads = ModelGrads::zeros_like(params);
    let m = batch as f64;
    let mut d_logits = DVector::zeros(batch);
    for i in 0..batch {
        let s = cache.scores[i];
        let d_score = if s <= BCE_EPS || s >= 1.0 - BCE_EPS {
            0.0
        } else {
            (-targets[i] / s + (1.0 - targets[i]) / (1.0 - s)) / m
        };
        d_logits[i] = d_score * s * (1.0 - s);
    }

    let mlp = &params.mlp;
    let cache_mlp = &cache.mlp;
    let fuse2 = mlp.w3.nrows();

    let mut d_h2 = DMatrix::zeros(batch, fuse2);
    for i in 0..batch {
        grads.mlp_b3[(0, 0)] += d_logits[i];
        for j in 0..fuse2 {
            grads.mlp_w3[(j, 0)] += cache_mlp.h2[(i, j)] * d_logits[i];
            d_h2[(i, j)] = d_logits[i] * mlp.w3[(j, 0)];
        }
    }

    if let Some(mask) = &cache_mlp.mask2 {
        d_h2 = d_h2.component_mul(mask);
    }
    let d_y2 = d_h2.zip_map(&cache_mlp.y2, |g, y| if y > 0.0 { g } else { 0.0 });
    let d_z2 = bn_backward(
        &d_y2,
        &cache_mlp.bn2,
        &mlp.bn2,
        &mut grads.bn2_gamma,
        &mut grads.bn2_beta,
    );
    grads.mlp_w2 += cache_mlp.h1.tr_mul(&d_z2);
    for j in 0..d_z2.ncols() {
        for i in 0..batch {
            grads.mlp_b2[(j, 0)] += d_z2[(i, j)];
        }
    }
    let mut d_h1 = &d_z2 * mlp.w2.transpose();

    if let Some(mask) = &cache_mlp.mask1 {
        d_h1 = d_h1.component_mul(mask);
    }
    let d_y1 = d_h1.zip_map(&cache_mlp.y1, |g, y| if y > 0.0 { g } else { 0.0 });
    let d_z1 = bn_backward(
        &d_y1,
        &cache_mlp.bn1,
        &mlp.bn1,
        &mut grads.bn1_gamma,
        &mut grads.bn1_beta,
    );
    grads.mlp_w1 += cache_mlp.fdiff.tr_mul(&d_z1);
    for j in 0..d_z1.ncols() {
        for i in 0..batch {
            grads.mlp_b1[(j, 0)] += d_z1[(i, j)];
        }
    }
    let d_fdiff = &d_z1 * mlp.w1.transpose();

    let hidden = params.gcn.w3.ncols();
    for (row, pair) in pairs.iter().enumerate() {
        let mut d_e1 = DVector::zeros(hidden);
        let mut d_e2 = DVector::zeros(hidden);
        for j in 0..hidden {
            let sgn = cache.signs[(row, j)];
            d_e1[j] = d_fdiff[(row, j)] * sgn;
            d_e2[j] = -d_fdiff[(row, j)] * sgn;
        }
        let (enc_a, enc_b) = &cache.encodes[row];
        backward_encoder(enc_a, &graphs[pair.a], &params.gcn, &d_e1, &mut grads);
        backward_encoder(enc_b, &graphs[pair.b], &params.gcn, &d_e2, &mut grads);
    }

    Ok((loss, grads))
}

/// Blends the batch statistics cached by a train-mode forward pass into the
/// running statistics: `running = (1 - momentum) * running + momentum *
/// batch`, using the unbiased variance when the batch has more than one row.
pub(crate) fn update_running_stats(mlp: &mut MlpParams, cache: &BatchCache) {
    let batch = cache.scores.len() as f64;
    for (bn, bc) in [
        (&mut mlp.bn1, &cache.mlp.bn1),
        (&mut mlp.bn2, &cache.mlp.bn2),
    ] {
        let unbias = if batch > 1.0 { batch / (batch - 1.0) } else { 1.0 };
        for j in 0..bn.running_mean.nrows() {
            let mom = bn.momentum;
            bn.running_mean[(j, 0)] = (1.0 - mom) * bn.running_mean[(j, 0)] + mom * bc.mean[j];
            bn.running_var[(j, 0)] =
                (1.0 - mom) * bn.running_var[(j, 0)] + mom * bc.var[j] * unbias;
        }
    }
}
