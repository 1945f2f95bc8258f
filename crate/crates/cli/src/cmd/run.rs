use std::io::BufWriter;
use std::path::Path;

use ecgmatch_core::trainer::{
    report_csv_header, run_experiment, EpochLog, ExperimentResult, Summary, TrainConfig,
};

use super::{csv, prepare, write_resolved_config, write_text};
use crate::{Failure, Global};

pub fn execute(g: &Global) -> Result<u8, Failure> {
    let (loaded, out) = prepare(g)?;
    let cfg = &loaded.config;
    let split = cfg.split.resolve()?;
    let datasets = loaded.load_datasets()?;
    write_resolved_config(&loaded, &out)?;

    let models: Vec<TrainConfig> = if cfg.variants.is_empty() {
        vec![cfg.train.clone()]
    } else {
        cfg.variants.iter().map(|v| v.apply(&cfg.train)).collect()
    };
    let mut results = Vec::new();
    for model in &models {
        log::info!("running {}", model.model_name());
        let r = run_experiment(&datasets, &split, model, &cfg.seeds)?;
        write_logs(&r, &out)?;
        if cfg.save_checkpoints {
            write_checkpoints(&r, &out)?;
        }
        results.push(r);
    }
    write_text(
        &out.join("reports.csv"),
        &csv(
            &report_csv_header(),
            results.iter().flat_map(|r| r.report_rows()),
        ),
    )?;
    let summary = csv(
        &Summary::csv_header(),
        results
            .iter()
            .map(|r| r.summary.csv_row(&r.model, &r.dataset)),
    );
    write_text(&out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(0)
}

fn write_logs(r: &ExperimentResult, out: &Path) -> Result<(), Failure> {
    for o in &r.per_seed {
        let rows = o
            .pretrain_log
            .iter()
            .chain(&o.train_log)
            .map(EpochLog::csv_row);
        let path = out
            .join("logs")
            .join(&r.model)
            .join(format!("seed_{}.csv", o.seed));
        write_text(&path, &csv(EpochLog::CSV_HEADER, rows))?;
    }
    Ok(())
}

fn write_checkpoints(r: &ExperimentResult, out: &Path) -> Result<(), Failure> {
    for o in &r.per_seed {
        let dir = out
            .join("checkpoints")
            .join(&r.model)
            .join(format!("seed_{}", o.seed));
        std::fs::create_dir_all(&dir)?;
        o.student.save(&dir.join("student.bin"))?;
        o.teacher.save(&dir.join("teacher.bin"))?;
        if let Some(b) = &o.banks {
            let mut w = BufWriter::new(std::fs::File::create(dir.join("banks.bin"))?);
            b.write_to(&mut w)?;
        }
        let mut buf = Vec::new();
        o.r_b.write_csv(&mut buf, &o.class_names)?;
        std::fs::write(dir.join("r_b.csv"), buf)?;
    }
    Ok(())
}
