//! Semi-supervised multi-label classification of multi-channel signals.
//!
//! A teacher network keeps memory banks of features and predictions for the
//! unlabeled pool; pseudo-labels come from K-nearest soft voting over those
//! banks and are weighted by how strongly the neighbors agree. A Frobenius
//! penalty aligns the label correlation structure predicted on unlabeled
//! data with the one observed on labeled data.

pub mod augment;
pub mod correlation;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pseudo;
pub mod rng;
pub mod signal;
pub mod stats;
pub mod trainer;

pub use correlation::{CorrelationMatrix, SimilarityKind};
pub use error::{Error, Result};
pub use nn::{LossWeights, ModelConfig, OptimizerConfig, ParameterSet};
pub use rng::RandomStream;
pub use signal::SignalMatrix;
