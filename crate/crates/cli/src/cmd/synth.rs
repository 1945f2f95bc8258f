use ecgmatch_core::data::{save_dataset, synth_generate, DataFormat, SynthConfig};
use ndarray::{Array2, Axis};
use serde::Serialize;

use super::write_text;
use crate::{Failure, Global};

/// Written next to the dataset as `<stem>.manifest.toml`.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub dataset: String,
    pub n_samples: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub target_marginals: Vec<f64>,
    pub empirical_marginals: Vec<f64>,
    /// Pearson correlation of the label columns; constant columns correlate 0 with the rest.
    pub empirical_correlation: Vec<Vec<f64>>,
}

pub fn execute(g: &Global) -> Result<u8, Failure> {
    let cfg_path = g
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("--config is required"))?;
    let out = g
        .out
        .as_ref()
        .ok_or_else(|| Failure::config("--out (dataset file) is required"))?;
    let text = std::fs::read_to_string(cfg_path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", cfg_path.display())))?;
    let mut cfg: SynthConfig = toml::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", cfg_path.display())))?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let ds = synth_generate(&cfg)?;
    let y = ds.labels();
    let marginals = y.mean_axis(Axis(0)).expect("non-empty").to_vec();
    check_calibration(&cfg.marginals, &marginals, ds.len())?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_dataset(&ds, out, DataFormat::from_path(out))?;
    let manifest = Manifest {
        dataset: out
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        n_samples: ds.len(),
        num_classes: ds.num_classes(),
        seed: cfg.seed,
        class_names: ds.class_names().to_vec(),
        target_marginals: cfg.marginals.clone(),
        empirical_marginals: marginals,
        empirical_correlation: label_correlation(y),
    };
    let text =
        toml::to_string(&manifest).map_err(|e| Failure::runtime(format!("manifest: {e}")))?;
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synth".into());
    let mpath = out.with_file_name(format!("{stem}.manifest.toml"));
    write_text(&mpath, &text)?;
    println!("wrote {} and {}", out.display(), mpath.display());
    Ok(0)
}

/// Fails when an empirical marginal sits more than five binomial standard
/// errors (plus one sample) from its target.
fn check_calibration(target: &[f64], got: &[f64], n: usize) -> Result<(), Failure> {
    let n = n as f64;
    for (c, (&t, &e)) in target.iter().zip(got).enumerate() {
        let tol = 5.0 * (t * (1.0 - t) / n).sqrt() + 1.0 / n;
        if (t - e).abs() > tol {
            return Err(Failure::runtime(format!(
                "calibration failure: class {c} positive rate {e:.4} vs target {t:.4}"
            )));
        }
    }
    Ok(())
}

pub fn label_correlation(y: &Array2<f64>) -> Vec<Vec<f64>> {
    let c = y.ncols();
    let centered: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let col = y.column(j);
            let m = col.mean().unwrap_or(0.0);
            col.iter().map(|v| v - m).collect()
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norms: Vec<f64> = centered.iter().map(|v| dot(v, v).sqrt()).collect();
    (0..c)
        .map(|i| {
            (0..c)
                .map(|j| {
                    if i == j {
                        1.0
                    } else if norms[i] == 0.0 || norms[j] == 0.0 {
                        0.0
                    } else {
                        (dot(&centered[i], &centered[j]) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn correlation_symmetric_unit_diagonal() {
        let y = array![
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 0.0, 1.0]
        ];
        let r = label_correlation(&y);
        for i in 0..3 {
            assert_eq!(r[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(r[i][j], r[j][i]);
            }
        }
        assert_eq!(r[0][2], 0.0);
        assert_eq!(r[0][1], 0.0);
    }
}
