use ecgmatch_core::metrics::Metric;
use ecgmatch_core::trainer::{grid_cells, report_csv_header, run_grid, GridCell};

use super::{csv, prepare, write_resolved_config, write_text};
use crate::{Failure, Global};

pub const PLOT_HEADER: &str = "lambda_u,lambda_f,metric,mean,std";

pub fn execute(g: &Global, only: Option<usize>) -> Result<u8, Failure> {
    let (loaded, mut out) = prepare(g)?;
    let cfg = &loaded.config;
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Failure::config("gridsearch needs a [grid] section"))?;
    if !cfg.variants.is_empty() {
        log::warn!("variants are ignored by gridsearch; sweeping the [train] model");
    }
    let split = cfg.split.resolve()?;
    let mut cells = grid_cells(grid.mode, &grid.values, grid.fixed);
    if let Some(i) = only {
        if i >= cells.len() {
            return Err(Failure::config(format!(
                "--cell {i} out of range: the grid has {} cells",
                cells.len()
            )));
        }
        cells = vec![cells[i]];
        out = out.join(format!("cell_{i}"));
    }
    let datasets = loaded.load_datasets()?;
    write_resolved_config(&loaded, &out)?;
    let results = run_grid(&datasets, &split, &cfg.train, &cfg.seeds, &cells)?;

    let table = csv(
        &GridCell::csv_header(),
        results.iter().map(GridCell::csv_row),
    );
    write_text(&out.join("grid.csv"), &table)?;
    let plot = results.iter().flat_map(|c| {
        Metric::ALL.iter().map(move |&m| {
            format!(
                "{},{},{m},{},{}",
                c.weights.lambda_u,
                c.weights.lambda_f,
                c.result.summary.mean_of(m),
                c.result.summary.std_of(m)
            )
        })
    });
    write_text(&out.join("grid_plot.csv"), &csv(PLOT_HEADER, plot))?;
    let reports = results.iter().flat_map(|c| {
        let tag = format!(
            "{}@lu{}_lf{}",
            c.result.model, c.weights.lambda_u, c.weights.lambda_f
        );
        c.result.report_rows().into_iter().map(move |row| {
            let rest = row.split_once(',').map_or("", |(_, r)| r).to_string();
            format!("{tag},{rest}")
        })
    });
    write_text(
        &out.join("reports.csv"),
        &csv(&report_csv_header(), reports),
    )?;
    print!("{table}");
    Ok(0)
}
