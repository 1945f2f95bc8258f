use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One multi-channel recording, stored channels × samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMatrix(Array2<f64>);

impl SignalMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Contract(format!(
                "signal must have at least one channel and one sample, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("signal contains non-finite values".into()));
        }
        Ok(SignalMatrix(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.len();
        let length = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != length) {
            return Err(Error::Contract("ragged signal rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((channels, length), flat)
            .map_err(|e| Error::Contract(e.to_string()))?;
        Self::new(data)
    }

    pub fn channels(&self) -> usize {
        self.0.nrows()
    }

    pub fn length(&self) -> usize {
        self.0.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    pub(crate) fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}
