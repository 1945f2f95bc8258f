//! Synthetic multi-label signals.
//!
//! Labels threshold a correlated standard normal vector (a Gaussian copula):
//! class `c` is on when `z_c > Φ⁻¹(1 − π_c)`, so each marginal is `π_c` while
//! `correlation` controls co-occurrence. Signals are the sum of the active
//! classes' prototypes plus white noise.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{default_class_names, Dataset};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::signal::SignalMatrix;

const LABEL_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const PROTOTYPE_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub num_classes: usize,
    /// Target positive rate per class, each in (0, 1).
    pub marginals: Vec<f64>,
    /// Correlation of the latent Gaussian; symmetric with unit diagonal.
    pub correlation: Vec<Vec<f64>>,
    pub channels: usize,
    pub length: usize,
    pub noise_level: f64,
    pub seed: u64,
    pub dataset_id: String,
    /// Per-class `channels × length` templates; generated from the seed when absent.
    #[serde(skip)]
    pub prototypes: Option<Vec<SignalMatrix>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // class order: rhythm, ST/T, conduction, other, normal
        SynthConfig {
            n_samples: 2000,
            num_classes: 5,
            marginals: vec![0.18, 0.19, 0.22, 0.33, 0.29],
            correlation: vec![
                vec![1.0, 0.1, 0.3, 0.1, -0.5],
                vec![0.1, 1.0, 0.1, 0.3, -0.5],
                vec![0.3, 0.1, 1.0, 0.2, -0.5],
                vec![0.1, 0.3, 0.2, 1.0, -0.5],
                vec![-0.5, -0.5, -0.5, -0.5, 1.0],
            ],
            channels: 4,
            length: 256,
            noise_level: 1.0,
            seed: 0,
            dataset_id: "synth".into(),
            prototypes: None,
        }
    }
}

impl SynthConfig {
    /// Independent classes with the default marginals for `c = 5`, else 0.3.
    pub fn independent(num_classes: usize) -> Self {
        let base = SynthConfig::default();
        SynthConfig {
            num_classes,
            marginals: if num_classes == 5 {
                base.marginals.clone()
            } else {
                vec![0.3; num_classes]
            },
            correlation: identity(num_classes),
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes;
        if c < 2 || self.n_samples == 0 || self.channels == 0 || self.length == 0 {
            return Err(Error::Config(
                "n_samples, channels and length must be positive and num_classes ≥ 2".into(),
            ));
        }
        if self.marginals.len() != c || self.marginals.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::Config(format!(
                "need {c} marginals strictly inside (0, 1)"
            )));
        }
        if self.correlation.len() != c || self.correlation.iter().any(|r| r.len() != c) {
            return Err(Error::Config(format!("correlation must be {c} × {c}")));
        }
        for i in 0..c {
            if (self.correlation[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::Config("correlation diagonal must be 1".into()));
            }
            for j in 0..c {
                let v = self.correlation[i][j];
                if !(-1.0..=1.0).contains(&v) || (v - self.correlation[j][i]).abs() > 1e-12 {
                    return Err(Error::Config(
                        "correlation must be symmetric with entries in [-1, 1]".into(),
                    ));
                }
            }
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::Config("noise_level must be finite and ≥ 0".into()));
        }
        if let Some(p) = &self.prototypes {
            if p.len() != c
                || p.iter()
                    .any(|s| s.channels() != self.channels || s.length() != self.length)
            {
                return Err(Error::Config(format!(
                    "need {c} prototypes of shape {} × {}",
                    self.channels, self.length
                )));
            }
        }
        Ok(())
    }

    fn correlation_matrix(&self) -> Array2<f64> {
        let c = self.num_classes;
        Array2::from_shape_fn((c, c), |(i, j)| self.correlation[i][j])
    }
}

fn identity(c: usize) -> Vec<Vec<f64>> {
    (0..c)
        .map(|i| (0..c).map(|j| f64::from(u8::from(i == j))).collect())
        .collect()
}

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` if `a` is not positive definite.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[[i, k]] * l[[j, k]]).sum();
            if i == j {
                let d = a[[i, i]] - s;
                if d <= 1e-10 {
                    return None;
                }
                l[[i, i]] = d.sqrt();
            } else {
                l[[i, j]] = (a[[i, j]] - s) / l[[j, j]];
            }
        }
    }
    Some(l)
}

fn latent_factor(cfg: &SynthConfig) -> Result<Array2<f64>> {
    let r = cfg.correlation_matrix();
    if let Some(l) = cholesky(&r) {
        return Ok(l);
    }
    let eye = Array2::<f64>::eye(cfg.num_classes);
    let shrink = (1..=20)
        .map(|k| k as f64 * 0.05)
        .find(|&w| cholesky(&(&r * (1.0 - w) + &eye * w)).is_some())
        .unwrap_or(1.0);
    Err(Error::Config(format!(
        "latent correlation is not positive definite; shrinking toward the identity, \
         (1 − w)·R + w·I with w = {shrink:.2}, gives a valid matrix"
    )))
}

/// Per-class thresholds on the latent normal.
fn thresholds(marginals: &[f64]) -> Vec<f64> {
    let z = Normal::standard();
    marginals.iter().map(|&p| z.inverse_cdf(1.0 - p)).collect()
}

/// Smooth per-class templates: a few low-frequency cosines about the midpoint
/// plus a mirrored pair of bumps, scaled to unit RMS. Each template is
/// symmetric in time and shared by all channels, so temporal flips and
/// channel permutations leave a sample's class content unchanged.
pub(crate) fn generate_prototypes(cfg: &SynthConfig) -> Vec<SignalMatrix> {
    let root = RandomStream::new(cfg.seed).derive(&[PROTOTYPE_STREAM]);
    let l = cfg.length as f64;
    let mid = (l - 1.0) / 2.0;
    (0..cfg.num_classes)
        .map(|c| {
            let mut rs = root.derive(&[c as u64]);
            let waves: Vec<(f64, f64)> = (0..3)
                .map(|_| {
                    let f = rs.uniform_inclusive(1, 6) as f64;
                    let a = (0.5 + 0.5 * rs.unit()) * if rs.unit() < 0.5 { 1.0 } else { -1.0 };
                    (a, f)
                })
                .collect();
            let offset = rs.unit() * mid;
            let width = l / 20.0 + 1.0;
            let height = if rs.unit() < 0.5 { 1.5 } else { -1.5 };
            let mut row: Vec<f64> = (0..cfg.length)
                .map(|t| {
                    let t = t as f64;
                    let smooth: f64 = waves
                        .iter()
                        .map(|(a, f)| a * (2.0 * PI * f * (t - mid) / l).cos())
                        .sum();
                    let bump = |centre: f64| (-0.5 * ((t - centre) / width).powi(2)).exp();
                    smooth + height * (bump(mid - offset) + bump(mid + offset))
                })
                .collect();
            let rms = (row.iter().map(|v| v * v).sum::<f64>() / l).sqrt();
            if rms > 0.0 {
                row.iter_mut().for_each(|v| *v /= rms);
            }
            let data = Array2::from_shape_fn((cfg.channels, cfg.length), |(_, t)| row[t]);
            SignalMatrix::new(data).expect("prototype values are finite")
        })
        .collect()
}

/// Prototypes used by [`synth_generate`] for this config.
pub fn synth_prototypes(cfg: &SynthConfig) -> Vec<SignalMatrix> {
    cfg.prototypes
        .clone()
        .unwrap_or_else(|| generate_prototypes(cfg))
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let factor = latent_factor(cfg)?;
    let t = thresholds(&cfg.marginals);
    let protos = synth_prototypes(cfg);
    let root = RandomStream::new(cfg.seed);
    let c = cfg.num_classes;
    let mut labels = Array2::zeros((cfg.n_samples, c));
    let mut signals = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let mut rs = root.derive(&[LABEL_STREAM, i as u64]);
        let eps: Array1<f64> = (0..c)
            .map(|_| StandardNormal.sample(rs.rng_mut()))
            .collect();
        let z = factor.dot(&eps);
        for k in 0..c {
            labels[[i, k]] = f64::from(u8::from(z[k] > t[k]));
        }
        let mut data = Array2::<f64>::zeros((cfg.channels, cfg.length));
        for k in (0..c).filter(|&k| labels[[i, k]] == 1.0) {
            data += protos[k].data();
        }
        if cfg.noise_level > 0.0 {
            let mut ns = root.derive(&[NOISE_STREAM, i as u64]);
            for v in data.iter_mut() {
                let e: f64 = StandardNormal.sample(ns.rng_mut());
                *v += cfg.noise_level * e;
            }
        }
        signals.push(SignalMatrix::new(data)?);
    }
    Dataset::new(
        signals,
        labels,
        cfg.dataset_id.clone(),
        default_class_names(c),
    )
}
