//! Multi-label evaluation metrics.
//!
//! Ranking-based metrics treat tied scores as half-correct (ranking loss,
//! AUC) or as the worst possible rank (coverage, average precision). Rows or
//! classes that lack the label values a metric needs are skipped and counted
//! in [`SkipCounts`].

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores in [0, 1] paired with binary ground truth of the same shape.
#[derive(Debug, Clone)]
pub struct ScoreMatrix<'a> {
    scores: &'a Array2<f64>,
    labels: &'a Array2<f64>,
}

impl<'a> ScoreMatrix<'a> {
    pub fn new(scores: &'a Array2<f64>, labels: &'a Array2<f64>) -> Result<Self> {
        if scores.dim() != labels.dim() {
            return Err(Error::shape(
                "score/label matrices",
                &[labels.nrows(), labels.ncols()],
                &[scores.nrows(), scores.ncols()],
            ));
        }
        if scores.is_empty() {
            return Err(Error::Contract("empty score matrix".into()));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("scores must be finite".into()));
        }
        if let Some(((i, c), v)) = labels.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(Error::Contract(format!(
                "label {v} at ({i}, {c}) is not binary"
            )));
        }
        Ok(ScoreMatrix { scores, labels })
    }

    pub fn scores(&self) -> &Array2<f64> {
        self.scores
    }

    pub fn labels(&self) -> &Array2<f64> {
        self.labels
    }

    fn c(&self) -> usize {
        self.scores.ncols()
    }
}

/// The six reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RankingLoss,
    HammingLoss,
    Coverage,
    Map,
    MacroAuc,
    MacroGbeta,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::RankingLoss,
        Metric::HammingLoss,
        Metric::Coverage,
        Metric::Map,
        Metric::MacroAuc,
        Metric::MacroGbeta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::RankingLoss => "ranking_loss",
            Metric::HammingLoss => "hamming_loss",
            Metric::Coverage => "coverage",
            Metric::Map => "map",
            Metric::MacroAuc => "macro_auc",
            Metric::MacroGbeta => "macro_gbeta",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Map | Metric::MacroAuc | Metric::MacroGbeta)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    pub threshold: f64,
    pub beta: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            threshold: 0.5,
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkipCounts {
    pub ranking_rows: usize,
    pub coverage_rows: usize,
    pub map_classes: usize,
    pub auc_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    /// NaN where the class was skipped.
    pub average_precision: Vec<f64>,
    pub auc: Vec<f64>,
    pub gbeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ranking_loss: f64,
    pub hamming_loss: f64,
    pub coverage: f64,
    pub map: f64,
    pub macro_auc: f64,
    pub macro_gbeta: f64,
    pub per_class: Option<PerClass>,
    pub skipped: SkipCounts,
}

impl MetricsReport {
    /// Column order of [`MetricsReport::csv_fields`].
    pub const CSV_HEADER: &'static str =
        "ranking_loss,hamming_loss,coverage,map,macro_auc,macro_gbeta";

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::RankingLoss => self.ranking_loss,
            Metric::HammingLoss => self.hamming_loss,
            Metric::Coverage => self.coverage,
            Metric::Map => self.map,
            Metric::MacroAuc => self.macro_auc,
            Metric::MacroGbeta => self.macro_gbeta,
        }
    }

    pub fn csv_fields(&self) -> String {
        Metric::ALL
            .iter()
            .map(|&m| format!("{}", self.get(m)))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn all_finite(&self) -> bool {
        Metric::ALL.iter().all(|&m| self.get(m).is_finite())
    }
}

fn mean_of(values: &[f64], metric: &'static str, what: &str) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric {
            metric,
            reason: format!("no {what} with the required label values"),
        });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn split_by_label(scores: ArrayView1<f64>, labels: ArrayView1<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &y) in scores.iter().zip(labels.iter()) {
        if y == 1.0 {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    (pos, neg)
}

/// Count of `(a, b)` pairs with `a > b`, plus half the tied pairs, via sorting.
fn ordered_pair_score(higher: &[f64], lower: &[f64]) -> f64 {
    let mut sorted = lower.to_vec();
    sorted.sort_by(f64::total_cmp);
    higher
        .iter()
        .map(|&a| {
            let below = sorted.partition_point(|&b| b < a);
            let tied = sorted[below..].partition_point(|&b| b <= a);
            below as f64 + 0.5 * tied as f64
        })
        .sum()
}

fn ranking_loss_rows(sm: &ScoreMatrix) -> (Vec<f64>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (s, y) in sm.scores.rows().into_iter().zip(sm.labels.rows()) {
        let (rel, irr) = split_by_label(s, y);
        if rel.is_empty() || irr.is_empty() {
            skipped += 1;
            continue;
        }
        let mis = ordered_pair_score(&irr, &rel);
        out.push(mis / (rel.len() * irr.len()) as f64);
    }
    (out, skipped)
}

pub fn ranking_loss(sm: &ScoreMatrix) -> Result<f64> {
    mean_of(&ranking_loss_rows(sm).0, "ranking_loss", "rows")
}

pub fn hamming_loss(sm: &ScoreMatrix, threshold: f64) -> f64 {
    let wrong = sm
        .scores
        .iter()
        .zip(sm.labels.iter())
        .filter(|(&s, &y)| (s > threshold) != (y == 1.0))
        .count();
    wrong as f64 / sm.scores.len() as f64
}

fn coverage_rows(sm: &ScoreMatrix) -> (Vec<f64>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (s, y) in sm.scores.rows().into_iter().zip(sm.labels.rows()) {
        let lowest_relevant = s
            .iter()
            .zip(y.iter())
            .filter(|(_, &y)| y == 1.0)
            .map(|(&s, _)| s)
            .min_by(f64::total_cmp);
        match lowest_relevant {
            None => skipped += 1,
            // ties take the worst rank: count every label scored at least as high
            Some(m) => out.push(s.iter().filter(|&&v| v >= m).count() as f64),
        }
    }
    (out, skipped)
}

pub fn coverage(sm: &ScoreMatrix) -> Result<f64> {
    mean_of(&coverage_rows(sm).0, "coverage", "rows")
}

/// Average precision of one column; `None` without positives.
fn average_precision(scores: ArrayView1<f64>, labels: ArrayView1<f64>) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let total_pos = labels.iter().filter(|&&y| y == 1.0).count();
    if total_pos == 0 {
        return None;
    }
    let mut sum = 0.0;
    let mut seen = 0usize;
    let mut seen_pos = 0usize;
    let mut i = 0;
    while i < order.len() {
        // a tie group shares the precision measured after the whole group
        let mut j = i;
        let mut group_pos = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            group_pos += usize::from(labels[order[j]] == 1.0);
            j += 1;
        }
        seen += j - i;
        seen_pos += group_pos;
        sum += group_pos as f64 * seen_pos as f64 / seen as f64;
        i = j;
    }
    Some(sum / total_pos as f64)
}

fn per_class_ap(sm: &ScoreMatrix) -> Vec<Option<f64>> {
    (0..sm.c())
        .map(|c| average_precision(sm.scores.column(c), sm.labels.column(c)))
        .collect()
}

pub fn mean_average_precision(sm: &ScoreMatrix) -> Result<f64> {
    let aps: Vec<f64> = per_class_ap(sm).into_iter().flatten().collect();
    mean_of(&aps, "map", "classes")
}

fn class_auc(scores: ArrayView1<f64>, labels: ArrayView1<f64>) -> Option<f64> {
    let (pos, neg) = split_by_label(scores, labels);
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    Some(ordered_pair_score(&pos, &neg) / (pos.len() * neg.len()) as f64)
}

fn per_class_auc(sm: &ScoreMatrix) -> Vec<Option<f64>> {
    (0..sm.c())
        .map(|c| class_auc(sm.scores.column(c), sm.labels.column(c)))
        .collect()
}

pub fn macro_auc(sm: &ScoreMatrix) -> Result<f64> {
    let aucs: Vec<f64> = per_class_auc(sm).into_iter().flatten().collect();
    mean_of(&aucs, "macro_auc", "classes")
}

/// `TP / (TP + FN + beta·FP)` per class after thresholding; 0 on an empty denominator.
pub fn per_class_gbeta(sm: &ScoreMatrix, beta: f64, threshold: f64) -> Array1<f64> {
    (0..sm.c())
        .map(|c| {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for (&s, &y) in sm.scores.column(c).iter().zip(sm.labels.column(c)) {
                match (s > threshold, y == 1.0) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    (false, false) => {}
                }
            }
            let denom = tp + fn_ + beta * fp;
            if denom > 0.0 {
                tp / denom
            } else {
                0.0
            }
        })
        .collect()
}

pub fn macro_gbeta(sm: &ScoreMatrix, beta: f64, threshold: f64) -> f64 {
    per_class_gbeta(sm, beta, threshold).mean().unwrap_or(0.0)
}

/// All six metrics plus per-class vectors and skip counts.
pub fn evaluate(sm: &ScoreMatrix, opts: &MetricOptions) -> Result<MetricsReport> {
    let (rl, rl_skip) = ranking_loss_rows(sm);
    let (cov, cov_skip) = coverage_rows(sm);
    let ap = per_class_ap(sm);
    let auc = per_class_auc(sm);
    let gb = per_class_gbeta(sm, opts.beta, opts.threshold);
    let flat = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<_>>();
    let nan_filled =
        |v: &[Option<f64>]| v.iter().map(|x| x.unwrap_or(f64::NAN)).collect::<Vec<_>>();
    Ok(MetricsReport {
        ranking_loss: mean_of(&rl, "ranking_loss", "rows")?,
        hamming_loss: hamming_loss(sm, opts.threshold),
        coverage: mean_of(&cov, "coverage", "rows")?,
        map: mean_of(&flat(&ap), "map", "classes")?,
        macro_auc: mean_of(&flat(&auc), "macro_auc", "classes")?,
        macro_gbeta: gb.mean().unwrap_or(0.0),
        per_class: Some(PerClass {
            average_precision: nan_filled(&ap),
            auc: nan_filled(&auc),
            gbeta: gb.to_vec(),
        }),
        skipped: SkipCounts {
            ranking_rows: rl_skip,
            coverage_rows: cov_skip,
            map_classes: ap.iter().filter(|x| x.is_none()).count(),
            auc_classes: auc.iter().filter(|x| x.is_none()).count(),
        },
    })
}

/// Like [`evaluate`], but metrics with no valid rows/classes become NaN
/// instead of failing the whole report.
pub fn evaluate_lenient(sm: &ScoreMatrix, opts: &MetricOptions) -> MetricsReport {
    let or_nan = |r: Result<f64>| r.unwrap_or(f64::NAN);
    match evaluate(sm, opts) {
        Ok(r) => r,
        Err(_) => {
            let full = |v: Vec<Option<f64>>| v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect();
            let ap = per_class_ap(sm);
            let auc = per_class_auc(sm);
            let gb = per_class_gbeta(sm, opts.beta, opts.threshold);
            MetricsReport {
                ranking_loss: or_nan(ranking_loss(sm)),
                hamming_loss: hamming_loss(sm, opts.threshold),
                coverage: or_nan(coverage(sm)),
                map: or_nan(mean_average_precision(sm)),
                macro_auc: or_nan(macro_auc(sm)),
                macro_gbeta: gb.mean().unwrap_or(0.0),
                skipped: SkipCounts {
                    ranking_rows: ranking_loss_rows(sm).1,
                    coverage_rows: coverage_rows(sm).1,
                    map_classes: ap.iter().filter(|x| x.is_none()).count(),
                    auc_classes: auc.iter().filter(|x| x.is_none()).count(),
                },
                per_class: Some(PerClass {
                    average_precision: full(ap),
                    auc: full(auc),
                    gbeta: gb.to_vec(),
                }),
            }
        }
    }
}
