//! Siamese graph scoring: embed two terrain graphs with a shared
//! three-layer graph convolutional encoder and score their structural
//! similarity with a small fusion MLP.
//!
//! The encoder propagates node features through the normalized graph
//! Laplacian, keeps the top tenth of nodes by a learned score, and mean-pools
//! the gated survivors into a fixed-length embedding. The fusion head runs
//! the elementwise absolute difference of two embeddings through a
//! batch-normalized MLP ending in a sigmoid, so scores live in (0, 1).
//!
//! Everything here is plain dense linear algebra with hand-written reverse
//! mode gradients; see [`backprop`] for the training internals and
//! [`checkpoint`] for the serialized parameter container.

mod backprop;
mod checkpoint;
mod train;

pub use backprop::{clip_gradients, global_grad_norm, AdamState, ModelGrads};
pub use checkpoint::TensorStore;
pub use train::{
    binary_metrics, kfold_evaluate, stratified_folds, train, train_split, ClassMetrics, CvReport,
    EpochStats, FoldOutcome, TrainOutcome,
};

use crate::graph::{TerrainGraph, FEATURE_COUNT};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Layer widths for the encoder and the fusion head.
///
/// `input` must match the graph feature count for graphs built by
/// [`crate::graph::build_graph`]; smaller widths are used by tests that
/// compare against finite differences, where a compact model keeps the
/// perturbation loop cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetDims {
    /// Node feature width fed to the first graph convolution.
    pub input: usize,
    /// Width of all three graph convolution layers and the embedding.
    pub hidden: usize,
    /// First hidden width of the fusion MLP.
    pub fuse1: usize,
    /// Second hidden width of the fusion MLP.
    pub fuse2: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims {
            input: FEATURE_COUNT,
            hidden: 128,
            fuse1: 256,
            fuse2: 64,
        }
    }
}

impl NetDims {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.fuse1 == 0 || self.fuse2 == 0 {
            return Err(Error::InvalidParameter(
                "network layer widths must all be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Whether stochastic layers (dropout, batch statistics) are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, batch norm uses batch statistics.
    Train,
    /// Deterministic: dropout off, batch norm uses running statistics.
    Eval,
}

/// Encoder parameters: three Laplacian convolutions and the pooling score
/// vector. No biases anywhere in the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// `input x hidden`.
    pub w1: DMatrix<f64>,
    /// `hidden x hidden`.
    pub w2: DMatrix<f64>,
    /// `hidden x hidden`.
    pub w3: DMatrix<f64>,
    /// `hidden x 1`, dotted with each node's last-layer features to rank
    /// nodes for pooling.
    pub pool: DMatrix<f64>,
    /// Dropout rate applied after each convolution in train mode.
    pub dropout: f64,
}

/// One batch normalization layer: learned affine plus running statistics.
///
/// The running fields are buffers, not trained parameters; they are advanced
/// by the training loop from each batch's statistics and consulted only in
/// eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    /// Per-feature scale, `width x 1`.
    pub gamma: DMatrix<f64>,
    /// Per-feature shift, `width x 1`.
    pub beta: DMatrix<f64>,
    /// Running mean, `width x 1`.
    pub running_mean: DMatrix<f64>,
    /// Running variance, `width x 1`.
    pub running_var: DMatrix<f64>,
    /// Fraction of the batch statistic blended into the running value.
    pub momentum: f64,
    /// Stabilizer added to the variance before the square root.
    pub eps: f64,
}

impl BatchNorm {
    fn identity(width: usize) -> Self {
        BatchNorm {
            gamma: DMatrix::from_element(width, 1, 1.0),
            beta: DMatrix::zeros(width, 1),
            running_mean: DMatrix::zeros(width, 1),
            running_var: DMatrix::from_element(width, 1, 1.0),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    fn width(&self) -> usize {
        self.gamma.nrows()
    }
}

/// Fusion head parameters: two batch-normalized hidden layers and a scalar
/// output layer, applied to the absolute difference of two embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `hidden x fuse1`.
    pub w1: DMatrix<f64>,
    /// `fuse1 x 1`.
    pub b1: DMatrix<f64>,
    /// Batch norm over the first hidden layer.
    pub bn1: BatchNorm,
    /// `fuse1 x fuse2`.
    pub w2: DMatrix<f64>,
    /// `fuse2 x 1`.
    pub b2: DMatrix<f64>,
    /// Batch norm over the second hidden layer.
    pub bn2: BatchNorm,
    /// `fuse2 x 1`.
    pub w3: DMatrix<f64>,
    /// `1 x 1`.
    pub b3: DMatrix<f64>,
    /// Dropout rate applied after each hidden activation in train mode.
    pub dropout: f64,
}

/// Full model: shared encoder plus fusion head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gcn: GcnParams,
    pub mlp: MlpParams,
}

impl ModelParams {
    /// Xavier-uniform initialization with a fixed draw order, so one seed
    /// always produces one parameter set. Biases and shifts start at zero,
    /// scales at one.
    pub fn init(dims: &NetDims, rng: &mut ChaCha8Rng) -> Result<Self> {
        dims.validate()?;
        let gcn = GcnParams {
            w1: xavier(dims.input, dims.hidden, rng),
            w2: xavier(dims.hidden, dims.hidden, rng),
            w3: xavier(dims.hidden, dims.hidden, rng),
            pool: xavier(dims.hidden, 1, rng),
            dropout: 0.3,
        };
        let mlp = MlpParams {
            w1: xavier(dims.hidden, dims.fuse1, rng),
            b1: DMatrix::zeros(dims.fuse1, 1),
            bn1: BatchNorm::identity(dims.fuse1),
            w2: xavier(dims.fuse1, dims.fuse2, rng),
            b2: DMatrix::zeros(dims.fuse2, 1),
            bn2: BatchNorm::identity(dims.fuse2),
            w3: xavier(dims.fuse2, 1, rng),
            b3: DMatrix::zeros(1, 1),
            dropout: 0.5,
        };
        Ok(ModelParams { gcn, mlp })
    }

    /// The layer widths implied by the stored matrices.
    pub fn dims(&self) -> NetDims {
        NetDims {
            input: self.gcn.w1.nrows(),
            hidden: self.gcn.w1.ncols(),
            fuse1: self.mlp.w1.ncols(),
            fuse2: self.mlp.w2.ncols(),
        }
    }

    /// Checks that all matrix shapes chain together and rates are sane.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        let want: &[(&str, (usize, usize), (usize, usize))] = &[
            ("gcn.w2", self.gcn.w2.shape(), (d.hidden, d.hidden)),
            ("gcn.w3", self.gcn.w3.shape(), (d.hidden, d.hidden)),
            ("gcn.pool", self.gcn.pool.shape(), (d.hidden, 1)),
            ("mlp.w1", self.mlp.w1.shape(), (d.hidden, d.fuse1)),
            ("mlp.b1", self.mlp.b1.shape(), (d.fuse1, 1)),
            ("mlp.w2", self.mlp.w2.shape(), (d.fuse1, d.fuse2)),
            ("mlp.b2", self.mlp.b2.shape(), (d.fuse2, 1)),
            ("mlp.w3", self.mlp.w3.shape(), (d.fuse2, 1)),
            ("mlp.b3", self.mlp.b3.shape(), (1, 1)),
        ];
        for (name, got, expect) in want {
            if got != expect {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, expect.0, expect.1
                )));
            }
        }
        for (name, bn, width) in [
            ("mlp.bn1", &self.mlp.bn1, d.fuse1),
            ("mlp.bn2", &self.mlp.bn2, d.fuse2),
        ] {
            if bn.width() != width
                || bn.beta.nrows() != width
                || bn.running_mean.nrows() != width
                || bn.running_var.nrows() != width
            {
                return Err(Error::DimensionMismatch(format!(
                    "{name} statistics do not all have width {width}"
                )));
            }
            if !(bn.eps > 0.0) || !(0.0..=1.0).contains(&bn.momentum) {
                return Err(Error::InvalidParameter(format!(
                    "{name} eps must be positive and momentum in [0, 1]"
                )));
            }
        }
        for (name, rate) in [("gcn", self.gcn.dropout), ("mlp", self.mlp.dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::InvalidParameter(format!(
                    "{name} dropout rate {rate} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Everything the training loop needs to know besides the data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Adam step size.
    pub learning_rate: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
    /// Pairs per gradient step.
    pub batch_size: usize,
    /// Global gradient norm ceiling.
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping. Zero stops
    /// after the first epoch.
    pub patience: usize,
    /// Hard epoch ceiling.
    pub max_epochs: usize,
    /// Seed for initialization, shuffling, and dropout.
    pub seed: u64,
    /// Fold count for cross-validation.
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-3,
            batch_size: 32,
            clip_norm: 2.0,
            patience: 20,
            max_epochs: 500,
            seed: 0,
            folds: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(
                "learning rate must be positive and finite".into(),
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidParameter(
                "weight decay must be non-negative and finite".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be nonzero".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidParameter("clip norm must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidParameter("max epochs must be nonzero".into()));
        }
        Ok(())
    }
}

/// One supervised example: two graph indices and whether they are analogs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    /// Index of the first graph in the caller's graph list.
    pub a: usize,
    /// Index of the second graph.
    pub b: usize,
    /// True for a positive (structurally similar) pair.
    pub label: bool,
}

impl LabeledPair {
    pub fn new(a: usize, b: usize, label: bool) -> Self {
        LabeledPair { a, b, label }
    }

    /// The label as the 0/1 target used by the loss.
    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// A node's normalized last-layer activation strength, for map overlays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSample {
    /// Node index within the graph.
    pub node: usize,
    /// Node position, local meters.
    pub x: f64,
    pub y: f64,
    /// Activation norm min-max scaled into [0, 1].
    pub intensity: f64,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.random::<f64>() * 2.0 * limit - limit;
        }
    }
    m
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How many nodes pooling keeps: a tenth of the graph, rounded up.
pub(crate) fn pool_keep(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

/// Embeds one graph in eval mode: three Laplacian convolutions with ReLU,
/// then top-score gated mean pooling. Deterministic; dropout is inactive.
///
/// The graph's feature width must match the first convolution. A graph whose
/// standardized features are all zero embeds to the zero vector regardless
/// of the weights, because ReLU and pooling both preserve zero.
pub fn gcn_forward(graph: &TerrainGraph, params: &GcnParams) -> Result<Vec<f64>> {
    let tensors = GraphTensors::from_graph(graph);
    let embedding = backprop::encode_eval(&tensors, params)?;
    Ok(embedding.as_slice().to_vec())
}

/// Scores one pair of graphs in eval mode: `sigmoid(mlp(|e1 - e2|))`.
///
/// Symmetric under swapping the graphs, bit for bit, because the absolute
/// difference is. A graph paired with itself scores the same constant as any
/// other self-pair, since the head then sees the zero vector.
pub fn siamese_score(a: &TerrainGraph, b: &TerrainGraph, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let ta = GraphTensors::from_graph(a);
    let tb = GraphTensors::from_graph(b);
    backprop::score_eval(&ta, &tb, params)
}

/// Mean binary cross-entropy between scores and 0/1 targets, with scores
/// clamped to `[1e-7, 1 - 1e-7]` before the logarithms.
pub fn bce_loss(scores: &[f64], targets: &[f64]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} targets",
            scores.len(),
            targets.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidParameter(
            "loss over an empty batch is undefined".into(),
        ));
    }
    let mut total = 0.0;
    for (&s, &y) in scores.iter().zip(targets) {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter(format!(
                "scores must lie in [0, 1], got {s}"
            )));
        }
        if y != 0.0 && y != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "targets must be exactly 0 or 1, got {y}"
            )));
        }
        let s = s.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= y * s.ln() + (1.0 - y) * (1.0 - s).ln();
    }
    Ok(total / scores.len() as f64)
}

pub(crate) const BCE_EPS: f64 = 1e-7;

/// Per-node activation intensities from the last convolution layer, in eval
/// mode: the L2 norm of each node's hidden vector, min-max scaled to [0, 1].
/// A constant-norm graph (including all-zero features) maps to all zeros.
pub fn export_activations(graph: &TerrainGraph, params: &GcnParams) -> Result<Vec<ActivationSample>> {
    let tensors = GraphTensors::from_graph(graph);
    let h3 = backprop::hidden_eval(&tensors, params)?;
    let norms: Vec<f64> = (0..h3.nrows())
        .map(|i| h3.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let lo = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Ok(graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| ActivationSample {
            node: i,
            x: node.x,
            y: node.y,
            intensity: if span > 0.0 { (norms[i] - lo) / span } else { 0.0 },
        })
        .collect())
}

/// A graph lowered to the dense matrices the network consumes: its Laplacian
/// and standardized feature matrix. Training precomputes these once per
/// graph instead of once per pair visit.
#[derive(Debug, Clone)]
pub(crate) struct GraphTensors {
    pub laplacian: DMatrix<f64>,
    pub features: DMatrix<f64>,
}

impl GraphTensors {
    pub fn from_graph(graph: &TerrainGraph) -> Self {
        let n = graph.node_count();
        GraphTensors {
            laplacian: DMatrix::from_row_slice(n, n, graph.laplacian()),
            features: DMatrix::from_row_slice(n, FEATURE_COUNT, &graph.feature_matrix()),
        }
    }
}
