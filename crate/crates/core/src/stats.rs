//! Friedman test and Bonferroni-Dunn critical differences for comparing
//! `k` models over `N` datasets.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array1, Array2};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Critical value printed alongside the Friedman statistics in the reference
/// comparison (k = 8, N = 4, alpha = 0.05). Kept as a constant for reporting;
/// [`f_critical_value`] gives the F-distribution quantile for the same setting.
pub const REFERENCE_FRIEDMAN_CRITICAL: f64 = 3.2590;

/// Two-tailed Bonferroni-Dunn critical values q_alpha for k = 2..=10
/// (Demšar, JMLR 7, 2006, Table 5b). Equal to the standard normal quantile
/// at 1 − alpha / (2(k − 1)).
const Q_05: [f64; 9] = [
    1.960, 2.241, 2.394, 2.498, 2.576, 2.638, 2.690, 2.724, 2.773,
];
const Q_10: [f64; 9] = [
    1.645, 1.960, 2.128, 2.241, 2.326, 2.394, 2.450, 2.498, 2.539,
];

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceTable {
    /// datasets × models
    pub values: Array2<f64>,
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    pub higher_is_better: bool,
}

impl PerformanceTable {
    pub fn new(
        values: Array2<f64>,
        models: Vec<String>,
        datasets: Vec<String>,
        higher_is_better: bool,
    ) -> Result<Self> {
        let (n, k) = values.dim();
        if n < 2 || k < 2 {
            return Err(Error::Config(format!(
                "need at least 2 datasets and 2 models, got {n} × {k}"
            )));
        }
        if models.len() != k || datasets.len() != n {
            return Err(Error::shape(
                "performance table names",
                &[n, k],
                &[datasets.len(), models.len()],
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(
                "performance table has missing or non-finite cells".into(),
            ));
        }
        Ok(PerformanceTable {
            values,
            models,
            datasets,
            higher_is_better,
        })
    }

    /// Build from `(model, dataset, value)` records, averaging repeated cells
    /// (e.g. several seeds). Models and datasets are ordered by first appearance.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
        higher_is_better: bool,
    ) -> Result<Self> {
        let mut models: Vec<String> = Vec::new();
        let mut datasets: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for (m, d, v) in records {
            let mi = position_or_push(&mut models, m);
            let di = position_or_push(&mut datasets, d);
            let cell = cells.entry((di, mi)).or_insert((0.0, 0));
            cell.0 += v;
            cell.1 += 1;
        }
        let mut values = Array2::from_elem((datasets.len(), models.len()), f64::NAN);
        for ((d, m), (sum, count)) in cells {
            values[[d, m]] = sum / count as f64;
        }
        let missing: Vec<String> = values
            .indexed_iter()
            .filter(|(_, v)| v.is_nan())
            .map(|((d, m), _)| format!("({}, {})", models[m], datasets[d]))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Contract(format!(
                "missing (model, dataset) results: {}",
                missing.join(", ")
            )));
        }
        Self::new(values, models, datasets, higher_is_better)
    }

    pub fn num_datasets(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_models(&self) -> usize {
        self.values.ncols()
    }
}

fn position_or_push(list: &mut Vec<String>, name: &str) -> usize {
    match list.iter().position(|x| x == name) {
        Some(i) => i,
        None => {
            list.push(name.to_string());
            list.len() - 1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub ranks: Array2<f64>,
    pub mean_ranks: Array1<f64>,
}

impl RankTable {
    pub fn num_datasets(&self) -> usize {
        self.ranks.nrows()
    }

    pub fn num_models(&self) -> usize {
        self.ranks.ncols()
    }
}

/// Rank models within each dataset: best value gets 1, ties share the average rank.
pub fn rank_models(pt: &PerformanceTable) -> RankTable {
    let (n, k) = pt.values.dim();
    let mut ranks = Array2::zeros((n, k));
    for (row, mut out) in pt.values.rows().into_iter().zip(ranks.rows_mut()) {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            let o = row[a].total_cmp(&row[b]);
            if pt.higher_is_better {
                o.reverse()
            } else {
                o
            }
        });
        let mut i = 0;
        while i < k {
            let mut j = i + 1;
            while j < k && row[order[j]] == row[order[i]] {
                j += 1;
            }
            // positions i..j (0-based) share the mean of ranks i+1..=j
            let shared = (i + 1 + j) as f64 / 2.0;
            for &m in &order[i..j] {
                out[m] = shared;
            }
            i = j;
        }
    }
    let mean_ranks = ranks.mean_axis(ndarray::Axis(0)).expect("non-empty table");
    RankTable { ranks, mean_ranks }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FriedmanResult {
    pub chi2_f: f64,
    /// `f64::INFINITY` when the chi-square statistic hits its maximum N(k − 1).
    pub f_f: f64,
}

pub fn friedman_statistic(rt: &RankTable) -> Result<FriedmanResult> {
    let n = rt.num_datasets() as f64;
    let k = rt.num_models() as f64;
    if n < 2.0 || k < 2.0 {
        return Err(Error::Config("Friedman test needs N ≥ 2 and k ≥ 2".into()));
    }
    let sum_sq: f64 = rt.mean_ranks.iter().map(|r| r * r).sum();
    let chi2 = (12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0).powi(2) / 4.0)).max(0.0);
    let denom = n * (k - 1.0) - chi2;
    let f_f = if denom <= 1e-12 * n * k {
        f64::INFINITY
    } else {
        (n - 1.0) * chi2 / denom
    };
    Ok(FriedmanResult { chi2_f: chi2, f_f })
}

/// Upper `alpha` quantile of F with (k − 1, (k − 1)(N − 1)) degrees of freedom.
pub fn f_critical_value(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if k < 2 || n < 2 || !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!(
            "invalid F critical value request k={k}, N={n}, alpha={alpha}"
        )));
    }
    let d1 = (k - 1) as f64;
    let d2 = ((k - 1) * (n - 1)) as f64;
    let dist = FisherSnedecor::new(d1, d2).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(dist.inverse_cdf(1.0 - alpha))
}

/// Bonferroni-Dunn q_alpha for `k` models; alpha must be 0.05 or 0.10.
pub fn bonferroni_dunn_q(k: usize, alpha: f64) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::Config(format!(
            "no q table for alpha = {alpha}; use 0.05 or 0.1"
        )));
    };
    if !(2..=10).contains(&k) {
        return Err(Error::Config(format!("q table covers k = 2..=10, got {k}")));
    }
    Ok(table[k - 2])
}

pub fn bonferroni_dunn_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    let q = bonferroni_dunn_q(k, alpha)?;
    if n == 0 {
        return Err(Error::Config("N must be positive".into()));
    }
    let kf = k as f64;
    Ok(q * (kf * (kf + 1.0) / (6.0 * n as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub model: usize,
    pub rank_difference: f64,
    pub significant: bool,
}

/// Compare every model against `control`; a difference of at least `cd` is significant.
pub fn dunn_compare(rt: &RankTable, control: usize, cd: f64) -> Result<Vec<Verdict>> {
    let k = rt.num_models();
    if control >= k {
        return Err(Error::Config(format!(
            "control index {control} out of range for {k} models"
        )));
    }
    let base = rt.mean_ranks[control];
    Ok((0..k)
        .filter(|&j| j != control)
        .map(|j| {
            let diff = (rt.mean_ranks[j] - base).abs();
            Verdict {
                model: j,
                rank_difference: diff,
                significant: diff >= cd - 1e-12,
            }
        })
        .collect())
}

/// Everything the `compare` command reports for one metric.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub metric: String,
    pub models: Vec<String>,
    pub num_datasets: usize,
    pub ranks: RankTable,
    pub friedman: FriedmanResult,
    pub f_critical: f64,
    pub reference_critical: f64,
    pub alpha: f64,
    pub cd: Option<f64>,
    pub control: usize,
    pub verdicts: Vec<Verdict>,
}

impl ComparisonReport {
    /// `cd` is `None` (and no verdicts are produced) when k is outside the q table.
    pub fn build(metric: &str, pt: &PerformanceTable, control: usize, alpha: f64) -> Result<Self> {
        let ranks = rank_models(pt);
        let friedman = friedman_statistic(&ranks)?;
        let k = pt.num_models();
        let n = pt.num_datasets();
        let cd = match bonferroni_dunn_cd(k, n, alpha) {
            Ok(cd) => Some(cd),
            Err(e) => {
                log::warn!("{e}; skipping post-hoc test");
                None
            }
        };
        let verdicts = match cd {
            Some(cd) => dunn_compare(&ranks, control, cd)?,
            None => Vec::new(),
        };
        Ok(ComparisonReport {
            metric: metric.to_string(),
            models: pt.models.clone(),
            num_datasets: n,
            f_critical: f_critical_value(k, n, alpha)?,
            reference_critical: REFERENCE_FRIEDMAN_CRITICAL,
            ranks,
            friedman,
            alpha,
            cd,
            control,
            verdicts,
        })
    }

    /// One row per model: mean rank, rank difference to the control, verdict,
    /// plus the test statistics repeated on every row.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(
            w,
            "metric,model,mean_rank,diff_to_control,significant,chi2_f,f_f,f_critical,reference_critical,cd,alpha,datasets"
        )?;
        let cd = self.cd.map_or_else(|| "NA".to_string(), |c| c.to_string());
        for (j, name) in self.models.iter().enumerate() {
            let (diff, sig) = if j == self.control {
                ("0".to_string(), "control".to_string())
            } else {
                match self.verdicts.iter().find(|v| v.model == j) {
                    Some(v) => (v.rank_difference.to_string(), v.significant.to_string()),
                    None => (
                        (self.ranks.mean_ranks[j] - self.ranks.mean_ranks[self.control])
                            .abs()
                            .to_string(),
                        "NA".to_string(),
                    ),
                }
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.metric,
                name,
                self.ranks.mean_ranks[j],
                diff,
                sig,
                self.friedman.chi2_f,
                self.friedman.f_f,
                self.f_critical,
                self.reference_critical,
                cd,
                self.alpha,
                self.num_datasets
            )?;
        }
        Ok(())
    }

    /// Plot data: model, mean rank, and the CD whisker around the control.
    pub fn write_plot_data(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "model,mean_rank,whisker_low,whisker_high")?;
        for (j, name) in self.models.iter().enumerate() {
            let r = self.ranks.mean_ranks[j];
            let (lo, hi) = match (j == self.control, self.cd) {
                (true, Some(cd)) => ((r - cd).to_string(), (r + cd).to_string()),
                _ => (String::new(), String::new()),
            };
            writeln!(w, "{name},{r},{lo},{hi}")?;
        }
        Ok(())
    }
}
