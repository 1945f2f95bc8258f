//! The composite semi-supervised objective and its parameter gradient.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::loss::{
    bce_gradient, bce_supervised, bce_weighted_unsupervised, total_loss, LossWeights,
};
use super::{ForwardPass, ParameterSet};
use crate::correlation::{alignment_loss_and_grad, SimilarityKind};
use crate::error::{Error, Result};

/// Soft pseudo-labels and their per-cell agreement weights.
#[derive(Debug, Clone)]
pub struct UnsupervisedTargets {
    pub pseudo: Array2<f64>,
    pub alpha: Array2<f64>,
}

/// Preprocessed inputs for one optimization step.
///
/// `unlabeled_strong` feeds the pseudo-label term; both unlabeled views feed
/// the alignment term. Terms whose inputs are absent contribute zero.
#[derive(Debug, Clone, Copy)]
pub struct SslBatch<'a> {
    pub labeled_inputs: &'a Array2<f64>,
    pub labels: &'a Array2<f64>,
    pub unlabeled_weak: Option<&'a Array2<f64>>,
    pub unlabeled_strong: Option<&'a Array2<f64>>,
    pub targets: Option<&'a UnsupervisedTargets>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub lb: f64,
    pub lu: f64,
    pub lf: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub weights: LossWeights,
    pub similarity: SimilarityKind,
    /// Labeled correlation target; required when `weights.lambda_f > 0`.
    pub r_b: Option<&'a Array2<f64>>,
}

/// Interleaves strong/weak rows as `[q_1; p_1; q_2; p_2; ...]`.
fn interleave(strong: &Array2<f64>, weak: &Array2<f64>) -> Array2<f64> {
    let (n, c) = strong.dim();
    let mut out = Array2::zeros((2 * n, c));
    out.slice_mut(s![0..;2, ..]).assign(strong);
    out.slice_mut(s![1..;2, ..]).assign(weak);
    out
}

struct Passes {
    labeled: ForwardPass,
    strong: Option<ForwardPass>,
    weak: Option<ForwardPass>,
}

struct Evaluated {
    breakdown: LossBreakdown,
    d_labeled: Array2<f64>,
    d_strong: Option<Array2<f64>>,
    d_weak: Option<Array2<f64>>,
}

impl Objective<'_> {
    fn uses_pseudo(&self, batch: &SslBatch) -> bool {
        self.weights.lambda_u > 0.0 && batch.targets.is_some() && batch.unlabeled_strong.is_some()
    }

    fn uses_alignment(&self, batch: &SslBatch) -> bool {
        self.weights.lambda_f > 0.0
            && batch.unlabeled_strong.is_some()
            && batch.unlabeled_weak.is_some()
    }

    fn forward_all(&self, params: &ParameterSet, batch: &SslBatch) -> Result<Passes> {
        let labeled = params.forward(batch.labeled_inputs)?;
        let need_strong = self.uses_pseudo(batch) || self.uses_alignment(batch);
        let strong = match batch.unlabeled_strong {
            Some(x) if need_strong => Some(params.forward(x)?),
            _ => None,
        };
        let weak = match batch.unlabeled_weak {
            Some(x) if self.uses_alignment(batch) => Some(params.forward(x)?),
            _ => None,
        };
        Ok(Passes {
            labeled,
            strong,
            weak,
        })
    }

    fn evaluate(&self, passes: &Passes, batch: &SslBatch, with_grad: bool) -> Result<Evaluated> {
        self.weights.validate()?;
        let lb = bce_supervised(&passes.labeled.probs, batch.labels)?;
        let d_labeled = if with_grad {
            bce_gradient(&passes.labeled.probs, batch.labels, None)
        } else {
            Array2::zeros((0, 0))
        };

        let mut lu = 0.0;
        let mut d_strong = None;
        if self.uses_pseudo(batch) {
            let t = batch.targets.expect("checked by uses_pseudo");
            let q = &passes.strong.as_ref().expect("strong pass").probs;
            lu = bce_weighted_unsupervised(q, &t.pseudo, &t.alpha)?;
            if with_grad {
                d_strong = Some(self.weights.lambda_u * bce_gradient(q, &t.pseudo, Some(&t.alpha)));
            }
        }

        let mut lf = 0.0;
        let mut d_weak = None;
        if self.uses_alignment(batch) {
            let r_b = self.r_b.ok_or_else(|| {
                Error::Config("alignment term needs a labeled correlation matrix".into())
            })?;
            let q = &passes.strong.as_ref().expect("strong pass").probs;
            let p = &passes.weak.as_ref().expect("weak pass").probs;
            if q.dim() != p.dim() {
                return Err(Error::shape(
                    "unlabeled views",
                    &[q.nrows(), q.ncols()],
                    &[p.nrows(), p.ncols()],
                ));
            }
            let stacked = interleave(q, p);
            let (loss, d_stacked) = alignment_loss_and_grad(&stacked, r_b, self.similarity)?;
            lf = loss;
            if with_grad {
                let scale = self.weights.lambda_f;
                let dq = d_stacked.slice(s![0..;2, ..]).mapv(|v| v * scale);
                let dp = d_stacked.slice(s![1..;2, ..]).mapv(|v| v * scale);
                d_strong = Some(match d_strong {
                    Some(acc) => acc + &dq,
                    None => dq,
                });
                d_weak = Some(dp);
            }
        }

        let total = total_loss(lb, lu, lf, &self.weights);
        let breakdown = LossBreakdown { lb, lu, lf, total };
        if !total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss: {breakdown:?}")));
        }
        Ok(Evaluated {
            breakdown,
            d_labeled,
            d_strong,
            d_weak,
        })
    }

    pub fn loss(&self, params: &ParameterSet, batch: &SslBatch) -> Result<LossBreakdown> {
        let passes = self.forward_all(params, batch)?;
        Ok(self.evaluate(&passes, batch, false)?.breakdown)
    }

    pub fn loss_and_gradient(
        &self,
        params: &ParameterSet,
        batch: &SslBatch,
    ) -> Result<(LossBreakdown, ParameterSet)> {
        let passes = self.forward_all(params, batch)?;
        let ev = self.evaluate(&passes, batch, true)?;
        let mut grads = params.zeros_like();
        params.accumulate_backward(&passes.labeled, &ev.d_labeled, &mut grads)?;
        if let (Some(pass), Some(d)) = (&passes.strong, &ev.d_strong) {
            params.accumulate_backward(pass, d, &mut grads)?;
        }
        if let (Some(pass), Some(d)) = (&passes.weak, &ev.d_weak) {
            params.accumulate_backward(pass, d, &mut grads)?;
        }
        grads.check_finite()?;
        Ok((ev.breakdown, grads))
    }
}
