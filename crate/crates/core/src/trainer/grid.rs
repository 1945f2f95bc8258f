use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentResult, TrainConfig};
use crate::data::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::LossWeights;

/// The loss-weight grid: 0 to 1.6 in steps of 0.4.
pub const GRID_VALUES: [f64; 5] = [0.0, 0.4, 0.8, 1.2, 1.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Vary lambda_u with lambda_f held at the fixed value.
    SweepLambdaU,
    /// Vary lambda_f with lambda_u held at the fixed value.
    SweepLambdaF,
    /// Both one-axis sweeps; the shared centre cell runs once.
    Sweeps,
    Cartesian,
}

pub fn grid_cells(mode: GridMode, values: &[f64], fixed: f64) -> Vec<LossWeights> {
    let sweep_u = values.iter().map(|&u| LossWeights {
        lambda_u: u,
        lambda_f: fixed,
    });
    let sweep_f = values.iter().map(|&f| LossWeights {
        lambda_u: fixed,
        lambda_f: f,
    });
    let mut cells: Vec<LossWeights> = match mode {
        GridMode::SweepLambdaU => sweep_u.collect(),
        GridMode::SweepLambdaF => sweep_f.collect(),
        GridMode::Sweeps => sweep_u.chain(sweep_f).collect(),
        GridMode::Cartesian => values
            .iter()
            .flat_map(|&u| {
                values.iter().map(move |&f| LossWeights {
                    lambda_u: u,
                    lambda_f: f,
                })
            })
            .collect(),
    };
    let mut seen = Vec::new();
    cells.retain(|c| {
        let fresh = !seen.contains(c);
        if fresh {
            seen.push(*c);
        }
        fresh
    });
    cells
}

#[derive(Debug, Clone)]
pub struct GridCell {
    pub weights: LossWeights,
    pub result: ExperimentResult,
}

impl GridCell {
    pub fn csv_header() -> String {
        format!("lambda_u,lambda_f,{}", super::Summary::csv_header())
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{}",
            self.weights.lambda_u,
            self.weights.lambda_f,
            self.result
                .summary
                .csv_row(&self.result.model, &self.result.dataset)
        )
    }
}

pub fn run_grid(
    datasets: &[Dataset],
    split: &SplitSpec,
    cfg: &TrainConfig,
    seeds: &[u64],
    cells: &[LossWeights],
) -> Result<Vec<GridCell>> {
    if cells.is_empty() {
        return Err(Error::Config("grid has no cells".into()));
    }
    cells
        .iter()
        .map(|&weights| {
            weights.validate()?;
            log::info!(
                "grid cell lambda_u = {}, lambda_f = {}",
                weights.lambda_u,
                weights.lambda_f
            );
            let cell_cfg = TrainConfig {
                weights,
                ..cfg.clone()
            };
            Ok(GridCell {
                weights,
                result: run_experiment(datasets, split, &cell_cfg, seeds)?,
            })
        })
        .collect()
}
