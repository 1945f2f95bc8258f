use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::correlation::SimilarityKind;
use crate::data::PreprocessConfig;
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricOptions};
use crate::nn::{Activation, LossWeights, ModelConfig, OptimizerConfig};
use crate::pseudo::KnnConfig;

/// Which training procedure runs after teacher pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Neighbor-agreement pseudo-labels plus correlation alignment.
    #[default]
    Ecgmatch,
    /// Labeled loss only; no banks, no unlabeled views.
    SupervisedOnly,
    /// Pseudo-labels kept only where `max(ŷ, 1 − ŷ) ≥ tau`.
    FixedThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Drop the pseudo-label term together with banks, KNN and agreement.
    pub no_pseudo: bool,
    /// Weight every pseudo-label cell by 1.
    pub no_nam: bool,
    /// Drop the correlation alignment term.
    pub no_align: bool,
}

/// Extractor/head sizes; input and class counts come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub head_hidden: usize,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden_dims: vec![256],
            feature_dim: 128,
            head_hidden: 128,
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn model_config(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_dims: self.hidden_dims.clone(),
            feature_dim: self.feature_dim,
            head_hidden: self.head_hidden,
            num_classes,
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub weights: LossWeights,
    pub similarity: SimilarityKind,
    pub knn: KnnConfig,
    pub optimizer: OptimizerConfig,
    pub architecture: Architecture,
    pub augment: AugmentConfig,
    pub preprocess: PreprocessConfig,
    pub max_epochs: usize,
    pub pretrain_epochs: usize,
    pub patience: usize,
    pub pretrain_patience: usize,
    /// Weak augmentation on labeled inputs during teacher pre-training.
    pub pretrain_augment: bool,
    pub early_stop_metric: Metric,
    pub metrics: MetricOptions,
    pub ablations: Ablations,
    pub baseline: Baseline,
    pub tau: f64,
    /// Worker threads for KNN pseudo-labeling; results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_labeled: 64,
            batch_unlabeled: 448,
            weights: LossWeights::default(),
            similarity: SimilarityKind::Cosine,
            knn: KnnConfig::default(),
            optimizer: OptimizerConfig::default(),
            architecture: Architecture::default(),
            augment: AugmentConfig::default(),
            preprocess: PreprocessConfig::default(),
            max_epochs: 100,
            pretrain_epochs: 100,
            patience: 10,
            pretrain_patience: 10,
            pretrain_augment: true,
            early_stop_metric: Metric::Map,
            metrics: MetricOptions::default(),
            ablations: Ablations::default(),
            baseline: Baseline::Ecgmatch,
            tau: 0.95,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_labeled == 0 || self.batch_unlabeled == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.patience == 0 || self.pretrain_patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!(
                "tau must lie in [0, 1], got {}",
                self.tau
            )));
        }
        if self.knn.k == 0 {
            return Err(Error::Config("knn.k must be positive".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.weights.validate()?;
        self.optimizer.validate()?;
        self.augment.validate()?;
        self.preprocess.validate()?;
        Ok(())
    }

    pub fn uses_pseudo(&self) -> bool {
        self.baseline != Baseline::SupervisedOnly
            && !self.ablations.no_pseudo
            && self.weights.lambda_u > 0.0
    }

    pub fn uses_alignment(&self) -> bool {
        self.baseline != Baseline::SupervisedOnly
            && !self.ablations.no_align
            && self.weights.lambda_f > 0.0
    }

    /// Loss weights with disabled terms zeroed.
    pub fn effective_weights(&self) -> LossWeights {
        LossWeights {
            lambda_u: if self.uses_pseudo() {
                self.weights.lambda_u
            } else {
                0.0
            },
            lambda_f: if self.uses_alignment() {
                self.weights.lambda_f
            } else {
                0.0
            },
        }
    }

    /// Short label used in reports, e.g. `ecgmatch`, `ecgmatch-no_nam`.
    pub fn model_name(&self) -> String {
        let base = match self.baseline {
            Baseline::Ecgmatch => "ecgmatch",
            Baseline::SupervisedOnly => return "supervised_only".into(),
            Baseline::FixedThreshold => "fixed_threshold",
        };
        let mut name = base.to_string();
        for (on, tag) in [
            (self.ablations.no_pseudo, "no_pseudo"),
            (self.ablations.no_nam, "no_nam"),
            (self.ablations.no_align, "no_align"),
        ] {
            if on {
                name.push('-');
                name.push_str(tag);
            }
        }
        name
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_switches() {
        let mut c = TrainConfig::default();
        assert_eq!(
            c.effective_weights(),
            LossWeights {
                lambda_u: 0.8,
                lambda_f: 0.8
            }
        );
        c.ablations.no_pseudo = true;
        assert_eq!(c.effective_weights().lambda_u, 0.0);
        c.ablations.no_pseudo = false;
        c.ablations.no_align = true;
        assert_eq!(c.effective_weights().lambda_f, 0.0);
        assert_eq!(c.model_name(), "ecgmatch-no_align");
        c.baseline = Baseline::SupervisedOnly;
        assert_eq!(
            c.effective_weights(),
            LossWeights {
                lambda_u: 0.0,
                lambda_f: 0.0
            }
        );
    }
}
