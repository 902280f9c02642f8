//! The multi-headed hierarchical convolutional classifier.
//!
//! One head per feature (embedding into an LSTM gate transform), heads of a
//! socioecological level concatenated feature-major and convolved, level
//! outputs merged through a dense stack into a sigmoid risk score. Training
//! binarizes accumulated case counts at a cutoff and minimizes BCE with
//! Adam; model selection searches a cutoff grid by training AUC, and
//! validation is stratified k-fold.

mod checkpoint;
mod encoder;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use encoder::Encoder;
pub use model::{build_model, MhhcnnConfig, MhhcnnModel};
pub use train::{
    binarize, cross_validate, fit, select_cutoff, train, CutoffOutcome, CutoffReport, CvReport,
    TrainReport, TrainedModel, DEFAULT_CUTOFF_GRID,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MhhcnnError {
    #[error(
        "level {level:?} feeds the convolution only {length} positions, \
         kernel size {kernel} will not fit; use a smaller kernel"
    )]
    KernelTooWide {
        level: crate::schema::SesLevel,
        length: usize,
        kernel: usize,
    },
    #[error("config field `{field}` must be positive")]
    BadConfig { field: &'static str },
    #[error("labels contain a single class ({positives} positives of {total})")]
    SingleClass { positives: usize, total: usize },
    #[error("{got} inputs for {expected} labels")]
    InputMismatch { got: usize, expected: usize },
    #[error("record has {got} values, model expects {expected}")]
    RecordWidth { got: usize, expected: usize },
    #[error("encoded index {index} out of range for feature `{feature}` ({cardinality} slots)")]
    IndexRange {
        feature: String,
        index: usize,
        cardinality: usize,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {source}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        #[source]
        source: crate::ndcore::NdError,
    },
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("no feasible cutoff candidate (all left a single class)")]
    NoFeasibleCutoff,
    #[error("fold {fold} leaves a single-class training split")]
    FoldSingleClass { fold: usize },
    #[error("checkpoint schema hash {found} does not match the provided schema ({expected})")]
    SchemaHashMismatch { found: String, expected: String },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] crate::ndcore::NdError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Schema(#[from] crate::schema::SchemaError),
}

pub type Result<T> = std::result::Result<T, MhhcnnError>;
