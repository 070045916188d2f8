//! Mislabel detection and removal for classification datasets represented as
//! pre-computed embeddings.
//!
//! The main detector trains a linear softmax probe on frozen embeddings with
//! LBFGS, produces out-of-fold probabilities (optionally averaged over
//! augmented embedding views), and prunes examples with confident learning.
//! Baselines (kNN voting, TracIn self-influence, zero-shot similarity), noise
//! injection, multi-label removal strategies and retraining sweeps are built on
//! the same substrate.
//!
//! With the default `parallel` feature, cross-validation folds, sweep cells,
//! grid cells and kNN queries fan out over rayon. Without it everything runs
//! sequentially; outputs are identical either way.

pub mod dataio;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod multilabel;
pub mod noise;
pub mod numerics;
pub mod par;
pub mod probe;

pub use dataio::{EmbeddingTensor, LabelSet, MultiLabelSet};
pub use detectors::MislabelReport;
pub use error::{Error, Result};
pub use numerics::{Matrix, RngStream};
pub use probe::{ProbeModel, TrainConfig};
