//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use ecgmatch_core::data::{
    load_dataset, synth_generate, DataFormat, Dataset, Protocol, SplitSpec, SynthConfig,
};
use ecgmatch_core::trainer::{Baseline, GridMode, TrainConfig, GRID_VALUES};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Models to run on the same data. Empty means just `train` as given.
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default = "yes")]
    pub save_checkpoints: bool,
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: Option<GridSection>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn yes() -> bool {
    true
}

/// Either a synthetic dataset or a list of dataset files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub path: PathBuf,
    /// Guessed from the extension when absent.
    #[serde(default)]
    pub format: Option<DataFormat>,
}

/// Split settings; anything left out takes the protocol's standard value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub protocol: Protocol,
    pub train_frac: Option<f64>,
    pub val_frac: Option<f64>,
    pub test_frac: Option<f64>,
    pub labeled_frac: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub held_out: Option<String>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            protocol: Protocol::Within,
            train_frac: None,
            val_frac: None,
            test_frac: None,
            labeled_frac: None,
            seed: 0,
            held_out: None,
        }
    }
}

impl SplitSection {
    pub fn resolve(&self) -> Result<SplitSpec, Failure> {
        let base = match self.protocol {
            Protocol::Within => SplitSpec::within(self.seed),
            Protocol::Mix => SplitSpec::mix(self.seed),
            Protocol::Cross => {
                let held = self.held_out.clone().ok_or_else(|| {
                    Failure::config("split.held_out is required for the cross protocol")
                })?;
                SplitSpec::cross(held, self.seed)
            }
        };
        let spec = SplitSpec {
            train_frac: self.train_frac.unwrap_or(base.train_frac),
            val_frac: self.val_frac.unwrap_or(base.val_frac),
            test_frac: self.test_frac.unwrap_or(base.test_frac),
            labeled_frac: self.labeled_frac.unwrap_or(base.labeled_frac),
            held_out: self.held_out.clone().or(base.held_out.clone()),
            ..base
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ecgmatch,
    SupervisedOnly,
    FixedThreshold,
    NoPseudo,
    NoNam,
    NoAlign,
}

impl Variant {
    /// `base` with this variant's baseline and ablation switches.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.ablations = Default::default();
        cfg.baseline = Baseline::Ecgmatch;
        match self {
            Variant::Ecgmatch => {}
            Variant::SupervisedOnly => cfg.baseline = Baseline::SupervisedOnly,
            Variant::FixedThreshold => cfg.baseline = Baseline::FixedThreshold,
            Variant::NoPseudo => cfg.ablations.no_pseudo = true,
            Variant::NoNam => cfg.ablations.no_nam = true,
            Variant::NoAlign => cfg.ablations.no_align = true,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_grid_mode")]
    pub mode: GridMode,
    #[serde(default = "default_grid_values")]
    pub values: Vec<f64>,
    /// Value of the axis that is not swept.
    #[serde(default = "default_fixed")]
    pub fixed: f64,
}

fn default_grid_mode() -> GridMode {
    GridMode::Sweeps
}

fn default_grid_values() -> Vec<f64> {
    GRID_VALUES.to_vec()
}

fn default_fixed() -> f64 {
    0.8
}

/// A parsed config plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        let config = parse(&text, &path.display().to_string())?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_datasets(&self) -> Result<Vec<Dataset>, Failure> {
        let data = &self.config.data;
        if let Some(synth) = &data.synth {
            return Ok(vec![synth_generate(synth)?]);
        }
        data.datasets
            .iter()
            .map(|d| {
                let path = self.resolve(&d.path);
                let fmt = d.format.unwrap_or_else(|| DataFormat::from_path(&path));
                load_dataset(&path, fmt)
                    .map_err(|e| Failure::from(e).context(format!("loading {}", path.display())))
            })
            .collect()
    }
}

pub fn parse(text: &str, origin: &str) -> Result<ExperimentConfig, Failure> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| Failure::config(format!("{origin}: {e}")))?;
    validate(&cfg).map_err(|f| f.context(origin.to_string()))?;
    Ok(cfg)
}

pub fn validate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    if cfg.seeds.is_empty() {
        return Err(Failure::config("seeds must not be empty"));
    }
    match (&cfg.data.synth, cfg.data.datasets.is_empty()) {
        (Some(s), true) => s.validate()?,
        (None, false) => {}
        (Some(_), false) => {
            return Err(Failure::config(
                "data: give either synth or datasets, not both",
            ))
        }
        (None, true) => {
            return Err(Failure::config(
                "data: one of synth or datasets is required",
            ))
        }
    }
    let split = cfg.split.resolve()?;
    if split.protocol == Protocol::Within && cfg.data.datasets.len() > 1 {
        return Err(Failure::config(
            "the within protocol takes a single dataset",
        ));
    }
    cfg.train.validate()?;
    for v in &cfg.variants {
        v.apply(&cfg.train).validate()?;
    }
    if let Some(g) = &cfg.grid {
        if g.values.is_empty() {
            return Err(Failure::config("grid.values must not be empty"));
        }
        if g.values
            .iter()
            .chain([&g.fixed])
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Failure::config(
                "grid values must be finite and non-negative",
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse("[data.synth]\nn_samples = 100\n", "t").unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2]);
        let split = cfg.split.resolve().unwrap();
        assert_eq!(split, SplitSpec::within(0));
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse(
            "[data.synth]\nn_samples = 100\n[train]\nlamda_u = 1.0\n",
            "t",
        )
        .unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.to_string().contains("lamda_u"), "{err}");
        assert!(parse("typo = 1\n[data.synth]\n", "t").is_err());
    }

    #[test]
    fn cross_needs_held_out() {
        let text = "[[data.datasets]]\npath = \"a.csv\"\n[split]\nprotocol = \"cross\"\n";
        assert!(parse(text, "t").is_err());
        let ok = format!("{text}held_out = \"a\"\n");
        let spec = parse(&ok, "t").unwrap().split.resolve().unwrap();
        assert_eq!(spec.labeled_frac, 0.01);
        assert_eq!(spec.test_frac, 0.0);
    }

    #[test]
    fn variants_reset_switches() {
        let mut base = TrainConfig::default();
        base.ablations.no_nam = true;
        let c = Variant::NoAlign.apply(&base);
        assert!(c.ablations.no_align && !c.ablations.no_nam);
        assert_eq!(
            Variant::SupervisedOnly.apply(&base).model_name(),
            "supervised_only"
        );
    }
}
