//! Coarse-to-fine retrieval of terrain analogs.
//!
//! Given a reference trench raster and a corpus of candidate terrain tiles,
//! the stages in this crate narrow roughly thirty thousand raw detections
//! down to a single best structural analog:
//!
//! 1. [`ssc`] scans tiles for straight valley segments (local-extremum
//!    binarization, thinning, line fitting) and clips candidate rasters.
//! 2. [`twc`] compares cross-section sequences against the reference with
//!    derivative dynamic time warping and keeps the closest few thousand.
//! 3. [`mtm`] ranks survivors by cosine similarity of eigenshape loading
//!    matrices and keeps the top thousand.
//! 4. [`graph`] turns each finalist into a contour-node graph with five
//!    geomorphometric features per node.
//! 5. [`net`] scores reference/candidate graph pairs with a Siamese graph
//!    convolutional network trained on labeled pairs.
//!
//! [`raster`] supplies the grid container and its on-disk formats, and
//! [`pipeline`] wires the stages together behind a single configuration.

pub mod graph;
pub mod mtm;
pub mod net;
pub mod pipeline;
pub mod raster;
pub mod ssc;
pub mod twc;

/// Crate-wide error type. Stage code returns these; the CLI maps them to
/// process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file. The message names the offending line or field.
    #[error("parse error in {format}: {detail}")]
    Parse { format: &'static str, detail: String },

    /// A caller-supplied parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two inputs that must agree in shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An input region contains nodata where valid elevations are required.
    #[error("nodata encountered: {0}")]
    Nodata(String),

    /// A region or index lies outside the grid it refers to.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// Input is too small or too flat for the requested operation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A funnel stage produced no survivors; the pipeline cannot continue.
    #[error("stage {stage} produced no candidates")]
    EmptyStage { stage: &'static str },

    /// Configuration file missing, unreadable, or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(format: &'static str, detail: impl Into<String>) -> Self {
        Error::Parse { format, detail: detail.into() }
    }
}
