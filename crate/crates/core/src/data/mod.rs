//! Datasets, file formats, re-annotation, split protocols, synthetic data
//! and signal preprocessing.

mod annotation;
mod io;
mod preprocess;
mod split;
mod synth;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalMatrix;

pub use annotation::{map_annotations, AnnotationMap, NORMAL_CLASS, SUPERCLASSES};
pub use io::{load_dataset, save_dataset, DataFormat};
pub use preprocess::{preprocess, preprocess_dataset, PreprocessConfig};
pub use split::{split_cross, split_mix, split_within, Protocol, Split, SplitSpec};
pub use synth::{synth_generate, synth_prototypes, SynthConfig};

/// Signals with binary multi-label targets.
///
/// `sources` records, per sample, the id of the dataset it came from; it only
/// differs from `dataset_id` after pooling several datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    signals: Vec<SignalMatrix>,
    labels: Array2<f64>,
    dataset_id: String,
    class_names: Vec<String>,
    sources: Vec<String>,
}

impl Dataset {
    pub fn new(
        signals: Vec<SignalMatrix>,
        labels: Array2<f64>,
        dataset_id: impl Into<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let dataset_id = dataset_id.into();
        let sources = vec![dataset_id.clone(); signals.len()];
        Self::with_sources(signals, labels, dataset_id, class_names, sources)
    }

    pub fn with_sources(
        signals: Vec<SignalMatrix>,
        labels: Array2<f64>,
        dataset_id: impl Into<String>,
        class_names: Vec<String>,
        sources: Vec<String>,
    ) -> Result<Self> {
        if signals.len() != labels.nrows() || sources.len() != signals.len() {
            return Err(Error::shape(
                "dataset samples",
                &[signals.len(), signals.len()],
                &[labels.nrows(), sources.len()],
            ));
        }
        if class_names.len() != labels.ncols() {
            return Err(Error::shape(
                "class names",
                &[labels.ncols()],
                &[class_names.len()],
            ));
        }
        if let Some(((i, c), v)) = labels.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(Error::Contract(format!(
                "label {v} at sample {i}, class {c} is not binary"
            )));
        }
        Ok(Dataset {
            signals,
            labels,
            dataset_id: dataset_id.into(),
            class_names,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.ncols()
    }

    pub fn signals(&self) -> &[SignalMatrix] {
        &self.signals
    }

    pub fn labels(&self) -> &Array2<f64> {
        &self.labels
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Samples at `indices`, in that order, keeping their source ids.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Contract(format!(
                "sample index {bad} out of range for {} samples",
                self.len()
            )));
        }
        Dataset::with_sources(
            indices.iter().map(|&i| self.signals[i].clone()).collect(),
            self.labels.select(Axis(0), indices),
            self.dataset_id.clone(),
            self.class_names.clone(),
            indices.iter().map(|&i| self.sources[i].clone()).collect(),
        )
    }

    /// Concatenate datasets with matching classes; each sample keeps its source id.
    pub fn pool(datasets: &[Dataset], pooled_id: impl Into<String>) -> Result<Dataset> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::Config("no datasets to pool".into()))?;
        for d in datasets {
            if d.class_names != first.class_names {
                return Err(Error::Config(format!(
                    "dataset {:?} has classes {:?}, expected {:?}",
                    d.dataset_id, d.class_names, first.class_names
                )));
            }
        }
        let views: Vec<_> = datasets.iter().map(|d| d.labels.view()).collect();
        let labels =
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Contract(e.to_string()))?;
        Dataset::with_sources(
            datasets
                .iter()
                .flat_map(|d| d.signals.iter().cloned())
                .collect(),
            labels,
            pooled_id,
            first.class_names.clone(),
            datasets
                .iter()
                .flat_map(|d| d.sources.iter().cloned())
                .collect(),
        )
    }
}

/// `class_0, class_1, ...` unless `c` matches the five superclasses.
pub fn default_class_names(c: usize) -> Vec<String> {
    if c == SUPERCLASSES.len() {
        SUPERCLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..c).map(|i| format!("class_{i}")).collect()
    }
}

/// Per-class positive counts.
pub fn class_counts(labels: &Array2<f64>) -> Vec<usize> {
    labels
        .columns()
        .into_iter()
        .map(|c| c.iter().filter(|&&v| v == 1.0).count())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Labeled,
    Unlabeled,
    Validation,
    Test,
}
