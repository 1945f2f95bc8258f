//! Teacher pre-training, the semi-supervised training loop, early stopping,
//! experiment orchestration and grid search.

mod config;
mod experiment;
mod grid;

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::augment::{strong_augment, weak_augment, AugmentConfig};
use crate::correlation::{correlation_labeled, CorrelationMatrix};
use crate::data::{preprocess, Dataset, PreprocessConfig, Split, SplitRole};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_lenient, Metric, MetricOptions, MetricsReport, ScoreMatrix};
use crate::nn::{
    ema_update, lr_at, sgd_step, LossBreakdown, LossWeights, Objective, ParameterSet, SslBatch,
    UnsupervisedTargets, Velocity,
};
use crate::pseudo::{KnnConfig, MemoryBanks};
use crate::rng::RandomStream;
use crate::signal::SignalMatrix;

pub use config::{Ablations, Architecture, Baseline, TrainConfig};
pub use experiment::{
    parse_report_csv, report_csv_header, report_csv_row, run_experiment, run_seed,
    ExperimentResult, ReportRecord, SeedOutcome, Summary,
};
pub use grid::{grid_cells, run_grid, GridCell, GridMode, GRID_VALUES};

// Sub-stream tags; every random draw in training is keyed by one of these
// plus the epoch or step, so runs are reproducible from the seed alone.
const INIT: u64 = 1;
const PRETRAIN_BATCH: u64 = 2;
const PRETRAIN_AUG: u64 = 3;
const TRAIN_BATCH: u64 = 4;
const LABELED_AUG: u64 = 5;
const UNLABELED_WEAK: u64 = 6;
const UNLABELED_STRONG: u64 = 7;
const BANK_INIT: u64 = 8;

/// Split subsets ready for training; validation inputs are preprocessed once.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub val_inputs: Array2<f64>,
    pub val_labels: Array2<f64>,
    pub input_dim: usize,
}

impl TrainData {
    pub fn from_split(split: &Split, pre: &PreprocessConfig) -> Result<Self> {
        let labeled = split.subset(SplitRole::Labeled)?;
        let unlabeled = split.subset(SplitRole::Unlabeled)?;
        let val = split.subset(SplitRole::Validation)?;
        Self::new(labeled, unlabeled, &val, pre)
    }

    pub fn new(
        labeled: Dataset,
        unlabeled: Dataset,
        val: &Dataset,
        pre: &PreprocessConfig,
    ) -> Result<Self> {
        if labeled.is_empty() {
            return Err(Error::Config("labeled set is empty".into()));
        }
        let channels = labeled.signals()[0].channels();
        let input_dim = pre.output_dim(channels);
        let all = labeled
            .signals()
            .iter()
            .chain(unlabeled.signals())
            .chain(val.signals());
        if let Some(s) = all.into_iter().find(|s| s.channels() != channels) {
            return Err(Error::shape(
                "signal channels",
                &[channels],
                &[s.channels()],
            ));
        }
        let idx: Vec<usize> = (0..val.len()).collect();
        let val_inputs = build_inputs(
            val.signals(),
            &idx,
            View::Clean,
            &RandomStream::new(0),
            &AugmentConfig::default(),
            pre,
        );
        Ok(TrainData {
            val_labels: val.labels().clone(),
            labeled,
            unlabeled,
            val_inputs,
            input_dim,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.labeled.num_classes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Clean,
    Weak,
    Strong,
}

/// Preprocessed rows for `signals[idx[j]]`; row `j` draws its augmentation
/// from `stream.derive(&[j, idx[j]])`.
pub fn build_inputs(
    signals: &[SignalMatrix],
    idx: &[usize],
    view: View,
    stream: &RandomStream,
    aug: &AugmentConfig,
    pre: &PreprocessConfig,
) -> Array2<f64> {
    let channels = idx.first().map_or(1, |&i| signals[i].channels());
    let mut out = Array2::zeros((idx.len(), pre.output_dim(channels)));
    for (j, (&i, mut row)) in idx.iter().zip(out.rows_mut()).enumerate() {
        let x = &signals[i];
        let v = match view {
            View::Clean => preprocess(x, pre),
            View::Weak => preprocess(
                &weak_augment(x, &mut stream.derive(&[j as u64, i as u64]), aug),
                pre,
            ),
            View::Strong => preprocess(
                &strong_augment(x, &mut stream.derive(&[j as u64, i as u64]), aug),
                pre,
            ),
        };
        row.assign(&v);
    }
    out
}

/// Metrics of `params` on preprocessed inputs.
pub fn evaluate_model(
    params: &ParameterSet,
    inputs: &Array2<f64>,
    labels: &Array2<f64>,
    opts: &MetricOptions,
) -> Result<MetricsReport> {
    let probs = params.forward(inputs)?.probs;
    Ok(evaluate_lenient(&ScoreMatrix::new(&probs, labels)?, opts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored score has not improved for `patience` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub patience: usize,
    pub higher_is_better: bool,
    pub best: Option<f64>,
    pub best_epoch: Option<usize>,
    pub since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize, higher_is_better: bool) -> Self {
        EarlyStopper {
            patience,
            higher_is_better,
            best: None,
            best_epoch: None,
            since_best: 0,
        }
    }

    /// A NaN score never counts as an improvement.
    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        let better = match self.best {
            _ if score.is_nan() => false,
            None => true,
            Some(b) if self.higher_is_better => score > b,
            Some(b) => score < b,
        };
        if better {
            self.best = Some(score);
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

pub fn early_stop_check(
    stopper: &mut EarlyStopper,
    epoch: usize,
    val: &MetricsReport,
    metric: Metric,
) -> StopDecision {
    stopper.observe(epoch, val.get(metric))
}

/// Mutable training state: student, EMA teacher, banks and the labeled correlation target.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub student: ParameterSet,
    pub teacher: ParameterSet,
    pub velocity: Velocity,
    pub banks: Option<MemoryBanks>,
    pub r_b: CorrelationMatrix,
    pub step: usize,
    pub stopper: EarlyStopper,
    root: RandomStream,
}

impl TrainState {
    /// The student starts as a copy of the teacher.
    pub fn new(
        teacher: ParameterSet,
        r_b: CorrelationMatrix,
        banks: Option<MemoryBanks>,
        root: RandomStream,
        cfg: &TrainConfig,
    ) -> Self {
        TrainState {
            student: teacher.clone(),
            velocity: Velocity::zeros_like(&teacher),
            teacher,
            banks,
            r_b,
            step: 0,
            stopper: EarlyStopper::new(cfg.patience, cfg.early_stop_metric.higher_is_better()),
            root,
        }
    }

    pub fn root(&self) -> &RandomStream {
        &self.root
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub loss: LossBreakdown,
    pub lr: f64,
    /// Mean pseudo-label weight per class in this batch.
    pub acceptance: Option<Array1<f64>>,
}

/// Labeled inputs for step `step` exactly as [`train_step`] builds them.
pub fn labeled_step_inputs(
    state: &TrainState,
    data: &TrainData,
    idx: &[usize],
    cfg: &TrainConfig,
) -> (Array2<f64>, Array2<f64>) {
    let stream = state.root.derive(&[LABELED_AUG, state.step as u64]);
    let x = build_inputs(
        data.labeled.signals(),
        idx,
        View::Weak,
        &stream,
        &cfg.augment,
        &cfg.preprocess,
    );
    (x, data.labeled.labels().select(Axis(0), idx))
}

fn knn_pseudo_labels(
    banks: &MemoryBanks,
    queries: &Array2<f64>,
    knn: &KnnConfig,
    self_idx: &[usize],
    threads: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = queries.nrows();
    if threads <= 1 || n < 2 * threads {
        return banks.pseudo_labels(queries, knn, Some(self_idx));
    }
    let chunk = n.div_ceil(threads);
    let parts: Vec<Result<(Array2<f64>, Array2<f64>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| {
                let end = (start + chunk).min(n);
                let q = queries.slice(s![start..end, ..]).to_owned();
                let own = &self_idx[start..end];
                scope.spawn(move || banks.pseudo_labels(&q, knn, Some(own)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("knn worker panicked"))
            .collect()
    });
    let mut values = Vec::new();
    let mut agreement = Vec::new();
    for p in parts {
        let (v, a) = p?;
        values.push(v);
        agreement.push(a);
    }
    let cat = |m: Vec<Array2<f64>>| {
        let views: Vec<_> = m.iter().map(|a| a.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("chunks share a width")
    };
    Ok((cat(values), cat(agreement)))
}

/// Pseudo-label weights for the configured variant.
fn pseudo_weights(pseudo: &Array2<f64>, agreement: Array2<f64>, cfg: &TrainConfig) -> Array2<f64> {
    match cfg.baseline {
        Baseline::FixedThreshold => {
            pseudo.mapv(|y| if y.max(1.0 - y) >= cfg.tau { 1.0 } else { 0.0 })
        }
        _ if cfg.ablations.no_nam => Array2::ones(pseudo.dim()),
        _ => agreement,
    }
}

/// One optimization step: augment both batches, refresh the banks with the
/// teacher's view of the unlabeled batch, pseudo-label it by KNN over the
/// banks, take an SGD step on the student and move the teacher by EMA.
///
/// `unlabeled_idx` indexes both `data.unlabeled` and the bank rows.
pub fn train_step(
    state: &mut TrainState,
    data: &TrainData,
    labeled_idx: &[usize],
    unlabeled_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<StepReport> {
    let step = state.step as u64;
    let (xb, yb) = labeled_step_inputs(state, data, labeled_idx, cfg);
    let weights = cfg.effective_weights();
    let use_unlabeled =
        (weights.lambda_u > 0.0 || weights.lambda_f > 0.0) && !unlabeled_idx.is_empty();

    let mut views = None;
    let mut targets = None;
    let mut acceptance = None;
    if use_unlabeled {
        let signals = data.unlabeled.signals();
        let weak_stream = state.root.derive(&[UNLABELED_WEAK, step]);
        let strong_stream = state.root.derive(&[UNLABELED_STRONG, step]);
        let xw = build_inputs(
            signals,
            unlabeled_idx,
            View::Weak,
            &weak_stream,
            &cfg.augment,
            &cfg.preprocess,
        );
        let xs = build_inputs(
            signals,
            unlabeled_idx,
            View::Strong,
            &strong_stream,
            &cfg.augment,
            &cfg.preprocess,
        );
        if weights.lambda_u > 0.0 {
            let banks = state
                .banks
                .as_mut()
                .ok_or_else(|| Error::Contract("memory banks are not initialized".into()))?;
            banks.update(unlabeled_idx, &state.teacher, &xw)?;
            let queries = state.student.forward(&xw)?.features;
            let (pseudo, agreement) =
                knn_pseudo_labels(banks, &queries, &cfg.knn, unlabeled_idx, cfg.threads)?;
            let alpha = pseudo_weights(&pseudo, agreement, cfg);
            acceptance = alpha.mean_axis(Axis(0));
            targets = Some(UnsupervisedTargets { pseudo, alpha });
        }
        views = Some((xw, xs));
    }

    let objective = Objective {
        weights,
        similarity: cfg.similarity,
        r_b: Some(&state.r_b.values),
    };
    let batch = SslBatch {
        labeled_inputs: &xb,
        labels: &yb,
        unlabeled_weak: views.as_ref().map(|v| &v.0),
        unlabeled_strong: views.as_ref().map(|v| &v.1),
        targets: targets.as_ref(),
    };
    let (loss, grads) = objective.loss_and_gradient(&state.student, &batch)?;
    let lr = lr_at(state.step, &cfg.optimizer);
    sgd_step(
        &mut state.student,
        &grads,
        &mut state.velocity,
        lr,
        cfg.optimizer.momentum,
    )?;
    ema_update(
        &mut state.teacher,
        &state.student,
        cfg.optimizer.ema_momentum,
    )?;
    state.step += 1;
    Ok(StepReport {
        loss,
        lr,
        acceptance,
    })
}

/// `max(1, ⌊n_labeled / batch⌋)`.
pub fn iterations_per_epoch(n_labeled: usize, batch: usize) -> usize {
    (n_labeled / batch.max(1)).max(1)
}

/// Labeled and unlabeled index batches for one epoch.
///
/// Labeled batches are consecutive slices of a fresh permutation. Unlabeled
/// batches are disjoint slices of a permutation when the pool is large
/// enough, otherwise drawn with replacement.
pub fn epoch_batches(
    n_labeled: usize,
    n_unlabeled: usize,
    batch_labeled: usize,
    batch_unlabeled: usize,
    stream: &RandomStream,
) -> Vec<(Vec<usize>, Vec<usize>)> {
    let iters = iterations_per_epoch(n_labeled, batch_labeled);
    let mut rs = stream.derive(&[0]);
    let mut lab: Vec<usize> = (0..n_labeled).collect();
    rs.shuffle(&mut lab);
    let bl = batch_labeled.min(n_labeled);
    let mut us = stream.derive(&[1]);
    let mut unl: Vec<usize> = (0..n_unlabeled).collect();
    let disjoint = n_unlabeled >= batch_unlabeled * iters;
    if disjoint {
        us.shuffle(&mut unl);
    }
    (0..iters)
        .map(|it| {
            let l = lab[it * bl..(it + 1) * bl].to_vec();
            let u = if n_unlabeled == 0 {
                Vec::new()
            } else if disjoint {
                unl[it * batch_unlabeled..(it + 1) * batch_unlabeled].to_vec()
            } else {
                (0..batch_unlabeled)
                    .map(|_| us.below(n_unlabeled))
                    .collect()
            };
            (l, u)
        })
        .collect()
}

/// Averages over one epoch, as written to the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String,
    pub epoch: usize,
    pub step: usize,
    pub lb: f64,
    pub lu: f64,
    pub lf: f64,
    pub total: f64,
    pub lr: f64,
    pub val_metric: f64,
    pub acceptance: Option<Vec<f64>>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "phase,epoch,step,L_b,L_u,L_f,L,lr,val_metric,acceptance";

    pub fn csv_row(&self) -> String {
        let acc = self
            .acceptance
            .as_ref()
            .map(|a| {
                a.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.phase,
            self.epoch,
            self.step,
            self.lb,
            self.lu,
            self.lf,
            self.total,
            self.lr,
            self.val_metric,
            acc
        )
    }
}

#[derive(Default)]
struct EpochAccumulator {
    n: usize,
    loss: [f64; 4],
    lr: f64,
    acceptance: Option<Array1<f64>>,
}

impl EpochAccumulator {
    fn add(&mut self, r: &StepReport) {
        self.n += 1;
        for (acc, v) in self
            .loss
            .iter_mut()
            .zip([r.loss.lb, r.loss.lu, r.loss.lf, r.loss.total])
        {
            *acc += v;
        }
        self.lr = r.lr;
        if let Some(a) = &r.acceptance {
            self.acceptance = Some(match self.acceptance.take() {
                Some(s) => s + a,
                None => a.clone(),
            });
        }
    }

    fn finish(self, phase: &str, epoch: usize, step: usize, val_metric: f64) -> EpochLog {
        let n = self.n.max(1) as f64;
        EpochLog {
            phase: phase.into(),
            epoch,
            step,
            lb: self.loss[0] / n,
            lu: self.loss[1] / n,
            lf: self.loss[2] / n,
            total: self.loss[3] / n,
            lr: self.lr,
            val_metric,
            acceptance: self.acceptance.map(|a| (a / n).to_vec()),
        }
    }
}

fn val_score(params: &ParameterSet, data: &TrainData, cfg: &TrainConfig) -> Result<Option<f64>> {
    if data.val_inputs.nrows() == 0 {
        return Ok(None);
    }
    let r = evaluate_model(params, &data.val_inputs, &data.val_labels, &cfg.metrics)?;
    Ok(Some(r.get(cfg.early_stop_metric)))
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub teacher: ParameterSet,
    pub r_b: CorrelationMatrix,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

/// Supervised training of the teacher with early stopping on the validation
/// metric; also computes the labeled correlation matrix from every labeled sample.
pub fn pretrain_teacher(
    data: &TrainData,
    cfg: &TrainConfig,
    root: &RandomStream,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let labels = data.labeled.labels();
    if labels.iter().all(|&v| v == 0.0) {
        return Err(Error::Config(format!(
            "the {} labeled samples contain no positive label in any class",
            labels.nrows()
        )));
    }
    let r_b = correlation_labeled(labels, cfg.similarity)?;
    let model = cfg
        .architecture
        .model_config(data.input_dim, data.num_classes());
    let mut params = ParameterSet::init(&model, &mut root.derive(&[INIT]))?;
    let mut velocity = Velocity::zeros_like(&params);
    let objective = Objective {
        weights: LossWeights {
            lambda_u: 0.0,
            lambda_f: 0.0,
        },
        similarity: cfg.similarity,
        r_b: None,
    };
    let mut stopper = EarlyStopper::new(
        cfg.pretrain_patience,
        cfg.early_stop_metric.higher_is_better(),
    );
    let mut best = params.clone();
    let mut log = Vec::new();
    let mut step = 0usize;
    let view = if cfg.pretrain_augment {
        View::Weak
    } else {
        View::Clean
    };
    for epoch in 1..=cfg.pretrain_epochs {
        let batches = epoch_batches(
            data.labeled.len(),
            0,
            cfg.batch_labeled,
            1,
            &root.derive(&[PRETRAIN_BATCH, epoch as u64]),
        );
        let mut acc = EpochAccumulator::default();
        for (idx, _) in batches {
            let stream = root.derive(&[PRETRAIN_AUG, step as u64]);
            let x = build_inputs(
                data.labeled.signals(),
                &idx,
                view,
                &stream,
                &cfg.augment,
                &cfg.preprocess,
            );
            let y = labels.select(Axis(0), &idx);
            let batch = SslBatch {
                labeled_inputs: &x,
                labels: &y,
                unlabeled_weak: None,
                unlabeled_strong: None,
                targets: None,
            };
            let (loss, grads) = objective.loss_and_gradient(&params, &batch)?;
            let lr = lr_at(step, &cfg.optimizer);
            sgd_step(
                &mut params,
                &grads,
                &mut velocity,
                lr,
                cfg.optimizer.momentum,
            )?;
            step += 1;
            acc.add(&StepReport {
                loss,
                lr,
                acceptance: None,
            });
        }
        let score = val_score(&params, data, cfg)?;
        log.push(acc.finish("pretrain", epoch, step, score.unwrap_or(f64::NAN)));
        match score {
            None => best = params.clone(),
            Some(s) => match stopper.observe(epoch, s) {
                StopDecision::Improved => best = params.clone(),
                StopDecision::Continue => {}
                StopDecision::Stop => break,
            },
        }
    }
    log::info!(
        "teacher pre-training: {step} steps, best epoch {:?}",
        stopper.best_epoch
    );
    Ok(PretrainOutcome {
        teacher: best,
        r_b,
        log,
        best_epoch: stopper.best_epoch,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Student with the best validation score (the initial student counts).
    pub student: ParameterSet,
    pub state: TrainState,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

/// Build the training state for the semi-supervised phase, filling the
/// banks with the teacher's weak view of every unlabeled sample.
pub fn init_state(
    data: &TrainData,
    cfg: &TrainConfig,
    pre: &PretrainOutcome,
    root: &RandomStream,
) -> Result<TrainState> {
    let banks = if cfg.uses_pseudo() && !data.unlabeled.is_empty() {
        if cfg.knn.k > data.unlabeled.len() {
            return Err(Error::Config(format!(
                "knn.k = {} exceeds the {} unlabeled samples",
                cfg.knn.k,
                data.unlabeled.len()
            )));
        }
        let idx: Vec<usize> = (0..data.unlabeled.len()).collect();
        let x = build_inputs(
            data.unlabeled.signals(),
            &idx,
            View::Weak,
            &root.derive(&[BANK_INIT]),
            &cfg.augment,
            &cfg.preprocess,
        );
        Some(MemoryBanks::init(&pre.teacher, &x)?)
    } else {
        None
    };
    Ok(TrainState::new(
        pre.teacher.clone(),
        pre.r_b.clone(),
        banks,
        root.clone(),
        cfg,
    ))
}

/// The semi-supervised phase with early stopping on the student's validation score.
pub fn train(
    data: &TrainData,
    cfg: &TrainConfig,
    pre: &PretrainOutcome,
    root: &RandomStream,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut state = init_state(data, cfg, pre, root)?;
    let mut best = state.student.clone();
    if let Some(s) = val_score(&state.student, data, cfg)? {
        state.stopper.observe(0, s);
    }
    let mut log = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let stream = root.derive(&[TRAIN_BATCH, epoch as u64]);
        let batches = epoch_batches(
            data.labeled.len(),
            data.unlabeled.len(),
            cfg.batch_labeled,
            cfg.batch_unlabeled,
            &stream,
        );
        let mut acc = EpochAccumulator::default();
        for (l, u) in &batches {
            let r = train_step(&mut state, data, l, u, cfg)?;
            acc.add(&r);
        }
        let score = val_score(&state.student, data, cfg)?;
        log.push(acc.finish("train", epoch, state.step, score.unwrap_or(f64::NAN)));
        match score {
            None => best = state.student.clone(),
            Some(s) => match state.stopper.observe(epoch, s) {
                StopDecision::Improved => best = state.student.clone(),
                StopDecision::Continue => {}
                StopDecision::Stop => break,
            },
        }
    }
    let best_epoch = state.stopper.best_epoch;
    log::info!(
        "{}: {} steps, best epoch {best_epoch:?}",
        cfg.model_name(),
        state.step
    );
    Ok(TrainOutcome {
        student: best,
        state,
        log,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_scores_stop_after_patience() {
        let mut s = EarlyStopper::new(3, true);
        let decisions: Vec<_> = (1..=4).map(|e| s.observe(e, 0.5)).collect();
        assert_eq!(decisions[0], StopDecision::Improved);
        assert_eq!(decisions[3], StopDecision::Stop);
        assert_eq!(
            &decisions[1..3],
            &[StopDecision::Continue, StopDecision::Continue]
        );
    }

    #[test]
    fn improving_scores_never_stop() {
        let mut s = EarlyStopper::new(2, true);
        assert!((1..100).all(|e| s.observe(e, e as f64) == StopDecision::Improved));
        let mut low = EarlyStopper::new(2, false);
        assert!((1..100).all(|e| low.observe(e, -(e as f64)) == StopDecision::Improved));
    }

    #[test]
    fn best_epoch_is_not_last() {
        let mut s = EarlyStopper::new(5, true);
        for (e, v) in [0.2, 0.9, 0.4, 0.3].iter().enumerate() {
            s.observe(e + 1, *v);
        }
        assert_eq!(s.best_epoch, Some(2));
        assert_eq!(s.best, Some(0.9));
    }

    #[test]
    fn batches_cover_labeled_set() {
        let rs = RandomStream::new(1);
        let b = epoch_batches(100, 50, 16, 8, &rs);
        assert_eq!(b.len(), 6);
        let mut seen: Vec<usize> = b.iter().flat_map(|(l, _)| l.clone()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 96);
        assert!(b.iter().all(|(_, u)| u.len() == 8));
        // 6 × 8 ≤ 50: disjoint unlabeled batches
        let mut u: Vec<usize> = b.iter().flat_map(|(_, u)| u.clone()).collect();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), 48);
        let small = epoch_batches(10, 5, 16, 8, &rs);
        assert_eq!(small.len(), 1);
        assert_eq!(small[0].0.len(), 10);
        assert_eq!(small[0].1.len(), 8);
        assert_eq!(iterations_per_epoch(80, 64), 1);
        assert_eq!(iterations_per_epoch(200, 64), 3);
    }
}
