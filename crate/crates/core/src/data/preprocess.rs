use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::signal::SignalMatrix;

/// Per-channel z-score, then average pooling to `pool_len` samples per channel.
///
/// With `zscore = false` and `pool_len` equal to the signal length the step is
/// the identity, which lets already-preprocessed signals pass through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub pool_len: usize,
    pub zscore: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            pool_len: 32,
            zscore: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_len == 0 {
            return Err(Error::Config("pool_len must be positive".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self, channels: usize) -> usize {
        channels * self.pool_len
    }
}

fn zscore(row: &mut [f64]) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        row.fill(0.0);
    } else {
        row.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

/// Bin `i` of `p` covers `[floor(i·L/p), floor((i+1)·L/p))`, widened to one
/// sample when `L < p`.
fn average_pool(row: &[f64], p: usize) -> impl Iterator<Item = f64> + '_ {
    let l = row.len();
    (0..p).map(move |i| {
        let start = (i * l / p).min(l - 1);
        let end = ((i + 1) * l / p).max(start + 1);
        row[start..end].iter().sum::<f64>() / (end - start) as f64
    })
}

pub fn preprocess(x: &SignalMatrix, cfg: &PreprocessConfig) -> Array1<f64> {
    let mut out = Vec::with_capacity(cfg.output_dim(x.channels()));
    for ch in x.data().rows() {
        let mut row = ch.to_vec();
        if cfg.zscore {
            zscore(&mut row);
        }
        out.extend(average_pool(&row, cfg.pool_len));
    }
    Array1::from(out)
}

/// Stack preprocessed samples into an `n × channels·pool_len` matrix.
pub fn preprocess_dataset(ds: &Dataset, cfg: &PreprocessConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let channels = ds
        .signals()
        .first()
        .map(SignalMatrix::channels)
        .ok_or_else(|| Error::Contract("cannot preprocess an empty dataset".into()))?;
    if let Some(s) = ds.signals().iter().find(|s| s.channels() != channels) {
        return Err(Error::shape(
            "signal channels",
            &[channels],
            &[s.channels()],
        ));
    }
    let dim = cfg.output_dim(channels);
    let mut out = Array2::zeros((ds.len(), dim));
    for (mut row, s) in out.rows_mut().into_iter().zip(ds.signals()) {
        row.assign(&preprocess(s, cfg));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hand_computed_pool() {
        let x = SignalMatrix::new(array![[1.0, 3.0]]).unwrap();
        let cfg = PreprocessConfig {
            pool_len: 1,
            zscore: true,
        };
        assert_eq!(preprocess(&x, &cfg).to_vec(), vec![0.0]);
        let cfg2 = PreprocessConfig {
            pool_len: 2,
            zscore: true,
        };
        assert_eq!(preprocess(&x, &cfg2).to_vec(), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_channel_is_zero() {
        let x = SignalMatrix::new(array![[5.0, 5.0, 5.0, 5.0], [1.0, 2.0, 3.0, 4.0]]).unwrap();
        let out = preprocess(
            &x,
            &PreprocessConfig {
                pool_len: 4,
                zscore: true,
            },
        );
        assert!(out.iter().take(4).all(|&v| v == 0.0));
        assert!(out.iter().skip(4).sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn output_length_ignores_input_length() {
        let cfg = PreprocessConfig {
            pool_len: 8,
            zscore: true,
        };
        for l in [3, 8, 13, 100] {
            let x = SignalMatrix::new(Array2::from_shape_fn((2, l), |(c, t)| {
                (c * 7 + t * t) as f64
            }))
            .unwrap();
            assert_eq!(preprocess(&x, &cfg).len(), 16);
        }
    }

    #[test]
    fn passthrough_hook() {
        let x = SignalMatrix::new(array![[0.3, -1.0, 2.0]]).unwrap();
        let out = preprocess(
            &x,
            &PreprocessConfig {
                pool_len: 3,
                zscore: false,
            },
        );
        assert_eq!(out.to_vec(), vec![0.3, -1.0, 2.0]);
    }
}
