use std::str::FromStr;

use ecgmatch_core::metrics::Metric;
use ecgmatch_core::stats::{ComparisonReport, PerformanceTable};
use ecgmatch_core::trainer::{parse_report_csv, ReportRecord};

use super::write_text;
use crate::{Failure, Global};

pub fn execute(
    g: &Global,
    pattern: &str,
    control: &str,
    metric: &str,
    alpha: f64,
) -> Result<u8, Failure> {
    let records = read_reports(pattern)?;
    let metrics: Vec<Metric> = if metric == "all" {
        Metric::ALL.to_vec()
    } else {
        vec![Metric::from_str(metric)?]
    };
    let mut table = String::new();
    for (n, &m) in metrics.iter().enumerate() {
        let pt = PerformanceTable::from_records(
            records
                .iter()
                .map(|r| (r.model.as_str(), r.dataset.as_str(), r.get(m))),
            m.higher_is_better(),
        )?;
        let ci = pt.models.iter().position(|x| x == control).ok_or_else(|| {
            Failure::config(format!(
                "control model {control:?} not among {:?}",
                pt.models
            ))
        })?;
        let report = ComparisonReport::build(m.name(), &pt, ci, alpha)?;
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        let text = String::from_utf8(buf).expect("csv is utf-8");
        // header only once across metrics
        let body = if n == 0 {
            text.as_str()
        } else {
            text.split_once('\n').map_or("", |(_, b)| b)
        };
        table.push_str(body);
        if let Some(out) = &g.out {
            let mut plot = Vec::new();
            report.write_plot_data(&mut plot)?;
            write_text(
                &out.join(format!("cd_plot_{m}.csv")),
                &String::from_utf8(plot).expect("csv is utf-8"),
            )?;
        }
    }
    if let Some(out) = &g.out {
        write_text(&out.join("comparison.csv"), &table)?;
    }
    print!("{table}");
    Ok(0)
}

fn read_reports(pattern: &str) -> Result<Vec<ReportRecord>, Failure> {
    let paths =
        glob::glob(pattern).map_err(|e| Failure::config(format!("bad glob {pattern:?}: {e}")))?;
    let mut records = Vec::new();
    let mut files = 0;
    for p in paths {
        let p = p.map_err(|e| Failure::runtime(e.to_string()))?;
        let text = std::fs::read_to_string(&p)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())))?;
        records.extend(parse_report_csv(&text, &p.display().to_string())?);
        files += 1;
    }
    if files == 0 {
        return Err(Failure::config(format!(
            "no report files match {pattern:?}"
        )));
    }
    Ok(records)
}
