use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before every log.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_u: f64,
    pub lambda_f: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_u: 0.8,
            lambda_f: 0.8,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_u", self.lambda_u), ("lambda_f", self.lambda_f)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn bce_term(p: f64, y: f64) -> f64 {
    let p = clamp(p);
    -((1.0 - y) * (1.0 - p).ln() + y * p.ln())
}

fn check_pair(probs: &Array2<f64>, targets: &Array2<f64>, context: &'static str) -> Result<()> {
    if probs.dim() != targets.dim() {
        return Err(Error::shape(
            context,
            &[probs.nrows(), probs.ncols()],
            &[targets.nrows(), targets.ncols()],
        ));
    }
    if probs.is_empty() {
        return Err(Error::Contract(format!("{context}: empty batch")));
    }
    if probs.iter().chain(targets.iter()).any(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("{context}: NaN input")));
    }
    Ok(())
}

/// Mean binary cross-entropy over all n·C cells.
pub fn bce_supervised(probs: &Array2<f64>, labels: &Array2<f64>) -> Result<f64> {
    check_pair(probs, labels, "bce_supervised")?;
    let sum: f64 = Zip::from(probs)
        .and(labels)
        .fold(0.0, |acc, &p, &y| acc + bce_term(p, y));
    Ok(sum / probs.len() as f64)
}

/// Mean of `alpha`-weighted binary cross-entropy against soft pseudo-labels.
pub fn bce_weighted_unsupervised(
    probs: &Array2<f64>,
    pseudo: &Array2<f64>,
    alpha: &Array2<f64>,
) -> Result<f64> {
    check_pair(probs, pseudo, "bce_weighted_unsupervised")?;
    check_pair(probs, alpha, "bce_weighted_unsupervised weights")?;
    if alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
        return Err(Error::Contract(
            "agreement weights must lie in [0, 1]".into(),
        ));
    }
    let sum: f64 = Zip::from(probs)
        .and(pseudo)
        .and(alpha)
        .fold(0.0, |acc, &p, &y, &a| acc + a * bce_term(p, y));
    Ok(sum / probs.len() as f64)
}

/// d(mean weighted BCE)/d(probs). Cells whose probability sits in the
/// clamped region have zero derivative.
pub fn bce_gradient(
    probs: &Array2<f64>,
    targets: &Array2<f64>,
    weights: Option<&Array2<f64>>,
) -> Array2<f64> {
    let n = probs.len() as f64;
    let mut g = Array2::zeros(probs.dim());
    Zip::indexed(&mut g).for_each(|(i, c), g| {
        let p = probs[[i, c]];
        if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
            return;
        }
        let y = targets[[i, c]];
        let w = weights.map_or(1.0, |a| a[[i, c]]);
        *g = w * ((1.0 - y) / (1.0 - p) - y / p) / n;
    });
    g
}

pub fn total_loss(lb: f64, lu: f64, lf: f64, w: &LossWeights) -> f64 {
    lb + w.lambda_u * lu + w.lambda_f * lf
}
