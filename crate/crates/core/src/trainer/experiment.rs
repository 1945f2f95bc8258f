use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    build_inputs, evaluate_model, pretrain_teacher, train, EpochLog, TrainConfig, TrainData, View,
};
use crate::augment::AugmentConfig;
use crate::correlation::CorrelationMatrix;
use crate::data::{split_cross, split_mix, split_within, Dataset, Protocol, SplitRole, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricsReport};
use crate::nn::ParameterSet;
use crate::pseudo::MemoryBanks;
use crate::rng::RandomStream;

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub report: MetricsReport,
    pub pretrain_log: Vec<EpochLog>,
    pub train_log: Vec<EpochLog>,
    pub student: ParameterSet,
    pub teacher: ParameterSet,
    pub banks: Option<MemoryBanks>,
    pub r_b: CorrelationMatrix,
    pub class_names: Vec<String>,
}

/// Mean and sample standard deviation of each metric across seeds,
/// in [`Metric::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Summary {
    pub fn from_reports(reports: &[&MetricsReport]) -> Summary {
        let n = reports.len() as f64;
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for m in Metric::ALL {
            let vals: Vec<f64> = reports.iter().map(|r| r.get(m)).collect();
            let mu = vals.iter().sum::<f64>() / n;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            mean.push(mu);
            std.push(var.sqrt());
        }
        Summary {
            seeds: reports.len(),
            mean,
            std,
        }
    }

    pub fn mean_of(&self, m: Metric) -> f64 {
        self.mean[Metric::ALL
            .iter()
            .position(|&x| x == m)
            .expect("metric listed")]
    }

    pub fn std_of(&self, m: Metric) -> f64 {
        self.std[Metric::ALL
            .iter()
            .position(|&x| x == m)
            .expect("metric listed")]
    }

    /// `model,dataset,seeds,<metric>_mean,<metric>_std,...`
    pub fn csv_header() -> String {
        let cols: Vec<String> = Metric::ALL
            .iter()
            .flat_map(|m| [format!("{m}_mean"), format!("{m}_std")])
            .collect();
        format!("model,dataset,seeds,{}", cols.join(","))
    }

    pub fn csv_row(&self, model: &str, dataset: &str) -> String {
        let cols: Vec<String> = self
            .mean
            .iter()
            .zip(&self.std)
            .flat_map(|(m, s)| [m.to_string(), s.to_string()])
            .collect();
        format!("{model},{dataset},{},{}", self.seeds, cols.join(","))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub model: String,
    pub dataset: String,
    pub per_seed: Vec<SeedOutcome>,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn report_rows(&self) -> Vec<String> {
        self.per_seed
            .iter()
            .map(|o| report_csv_row(&self.model, &self.dataset, o.seed, &o.report))
            .collect()
    }
}

/// One evaluation in a report file.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRecord {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub report_values: Vec<f64>,
}

impl ReportRecord {
    pub fn get(&self, m: Metric) -> f64 {
        self.report_values[Metric::ALL
            .iter()
            .position(|&x| x == m)
            .expect("metric listed")]
    }
}

pub fn report_csv_header() -> String {
    format!("model,dataset,seed,{}", MetricsReport::CSV_HEADER)
}

pub fn report_csv_row(model: &str, dataset: &str, seed: u64, r: &MetricsReport) -> String {
    format!("{model},{dataset},{seed},{}", r.csv_fields())
}

/// Parse a per-seed report file written by the `run` command.
pub fn parse_report_csv(text: &str, origin: &str) -> Result<Vec<ReportRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header = report_csv_header();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((i, h)) => {
            return Err(Error::parse(
                format!("{origin}:{}", i + 1),
                format!("expected header {header:?}, found {h:?}"),
            ))
        }
        None => return Err(Error::parse(origin, "empty report file")),
    }
    lines
        .map(|(i, line)| {
            let loc = format!("{origin}:{}", i + 1);
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 + Metric::ALL.len() {
                return Err(Error::parse(
                    loc,
                    format!(
                        "expected {} fields, found {}",
                        3 + Metric::ALL.len(),
                        f.len()
                    ),
                ));
            }
            let seed = f[2]
                .parse()
                .map_err(|_| Error::parse(&loc, format!("bad seed {:?}", f[2])))?;
            let report_values = f[3..]
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(&loc, format!("bad metric value {v:?}")))
                })
                .collect::<Result<_>>()?;
            Ok(ReportRecord {
                model: f[0].into(),
                dataset: f[1].into(),
                seed,
                report_values,
            })
        })
        .collect()
}

/// Name of the evaluation target used in reports.
pub fn dataset_label(datasets: &[Dataset], split: &SplitSpec) -> String {
    match split.protocol {
        Protocol::Within => datasets
            .first()
            .map_or_else(String::new, |d| d.dataset_id().to_string()),
        Protocol::Mix => "mix".into(),
        Protocol::Cross => split.held_out.clone().unwrap_or_default(),
    }
}

/// Split, pre-train, train and test for one seed. The split uses
/// `split.seed + seed`, so every seed sees a different partition.
pub fn run_seed(
    datasets: &[Dataset],
    split: &SplitSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SeedOutcome> {
    cfg.validate().map_err(|e| e.at_stage("config"))?;
    let spec = SplitSpec {
        seed: split.seed.wrapping_add(seed),
        ..split.clone()
    };
    let s = match spec.protocol {
        Protocol::Within => match datasets {
            [one] => split_within(one, &spec),
            _ => Err(Error::Config(format!(
                "within protocol takes one dataset, got {}",
                datasets.len()
            ))),
        },
        Protocol::Mix => split_mix(datasets, &spec),
        Protocol::Cross => split_cross(datasets, &spec),
    }
    .map_err(|e| e.at_stage("split"))?;
    let data = TrainData::from_split(&s, &cfg.preprocess).map_err(|e| e.at_stage("preprocess"))?;
    let root = RandomStream::new(seed);
    let pre = pretrain_teacher(&data, cfg, &root).map_err(|e| e.at_stage("pretrain"))?;
    let out = train(&data, cfg, &pre, &root).map_err(|e| e.at_stage("train"))?;
    let test = s
        .subset(SplitRole::Test)
        .map_err(|e| e.at_stage("evaluate"))?;
    let idx: Vec<usize> = (0..test.len()).collect();
    let x: Array2<f64> = build_inputs(
        test.signals(),
        &idx,
        View::Clean,
        &root,
        &AugmentConfig::default(),
        &cfg.preprocess,
    );
    let report = evaluate_model(&out.student, &x, test.labels(), &cfg.metrics)
        .map_err(|e| e.at_stage("evaluate"))?;
    log::info!("seed {seed}: test {} = {:.4}", Metric::Map, report.map);
    Ok(SeedOutcome {
        seed,
        report,
        pretrain_log: pre.log,
        train_log: out.log,
        student: out.student,
        teacher: out.state.teacher.clone(),
        banks: out.state.banks.clone(),
        r_b: pre.r_b,
        class_names: s.pool.class_names().to_vec(),
    })
}

/// [`run_seed`] for every seed, plus the mean/std summary.
pub fn run_experiment(
    datasets: &[Dataset],
    split: &SplitSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<ExperimentResult> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let per_seed = seeds
        .iter()
        .map(|&seed| run_seed(datasets, split, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<&MetricsReport> = per_seed.iter().map(|o| &o.report).collect();
    Ok(ExperimentResult {
        model: cfg.model_name(),
        dataset: dataset_label(datasets, split),
        summary: Summary::from_reports(&reports),
        per_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_csv_round_trip() {
        let r = MetricsReport {
            ranking_loss: 0.1,
            hamming_loss: 0.2,
            coverage: 1.5,
            map: 0.7,
            macro_auc: 0.8,
            macro_gbeta: 0.4,
            per_class: None,
            skipped: Default::default(),
        };
        let text = format!(
            "{}\n{}\n",
            report_csv_header(),
            report_csv_row("m", "d", 3, &r)
        );
        let recs = parse_report_csv(&text, "x").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].get(Metric::Map), 0.7);
        assert_eq!(recs[0].seed, 3);
        assert!(parse_report_csv("nope\n", "x").is_err());
    }

    #[test]
    fn summary_uses_sample_std() {
        let mk = |v: f64| MetricsReport {
            ranking_loss: v,
            hamming_loss: v,
            coverage: v,
            map: v,
            macro_auc: v,
            macro_gbeta: v,
            per_class: None,
            skipped: Default::default(),
        };
        let (a, b, c) = (mk(1.0), mk(2.0), mk(3.0));
        let s = Summary::from_reports(&[&a, &b, &c]);
        assert_eq!(s.mean_of(Metric::Map), 2.0);
        assert_eq!(s.std_of(Metric::Map), 1.0);
        assert_eq!(
            Summary::csv_header().split(',').count(),
            s.csv_row("m", "d").split(',').count()
        );
    }
}
