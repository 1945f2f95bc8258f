use std::path::Path;

use ecgmatch_core::metrics::{evaluate_lenient, MetricOptions, MetricsReport, ScoreMatrix};
use ndarray::Array2;

use super::{csv, write_text};
use crate::{Failure, Global};

pub const PER_CLASS_HEADER: &str = "class,average_precision,auc,gbeta";

pub fn execute(
    g: &Global,
    scores: &Path,
    labels: &Path,
    threshold: f64,
    beta: f64,
) -> Result<u8, Failure> {
    let s = read_matrix(scores)?;
    let y = read_matrix(labels)?;
    let opts = MetricOptions { threshold, beta };
    if !(threshold.is_finite() && beta.is_finite() && beta >= 0.0) {
        return Err(Failure::config(
            "threshold must be finite and beta finite and non-negative",
        ));
    }
    let sm = ScoreMatrix::new(&s, &y)?;
    let report = evaluate_lenient(&sm, &opts);
    for (name, v) in MetricsReport::CSV_HEADER
        .split(',')
        .zip(report.csv_fields().split(','))
    {
        println!("{name}\t{v}");
    }
    let k = &report.skipped;
    println!(
        "skipped\tranking_rows={} coverage_rows={} map_classes={} auc_classes={}",
        k.ranking_rows, k.coverage_rows, k.map_classes, k.auc_classes
    );
    if let Some(out) = &g.out {
        write_text(
            &out.join("metrics.csv"),
            &csv(MetricsReport::CSV_HEADER, [report.csv_fields()]),
        )?;
        if let Some(pc) = &report.per_class {
            let rows = (0..pc.auc.len()).map(|c| {
                format!(
                    "{c},{},{},{}",
                    pc.average_precision[c], pc.auc[c], pc.gbeta[c]
                )
            });
            write_text(&out.join("per_class.csv"), &csv(PER_CLASS_HEADER, rows))?;
        }
    }
    Ok(0)
}

/// Comma-separated numeric matrix; blank lines and `#` comments are skipped.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text, &path.display().to_string())
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<Array2<f64>, Failure> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Failure::config(format!(
                        "{origin}:{}:{}: not a number: {:?}",
                        i + 1,
                        j + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Failure::config(format!(
                    "{origin}:{}: expected {} columns, found {}",
                    i + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::config(format!("{origin}: no data rows")));
    }
    let cols = rows[0].len();
    Array2::from_shape_vec((rows.len(), cols), rows.concat())
        .map_err(|e| Failure::config(format!("{origin}: {e}")))
}
