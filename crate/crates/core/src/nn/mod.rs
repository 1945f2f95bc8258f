//! Feedforward feature extractor plus multi-label sigmoid head, with
//! hand-written reverse-mode gradients.
//!
//! Layer layout for a [`ModelConfig`] with hidden dims `[h1, .., hk]`:
//!
//! ```text
//! extractor: input -> h1 -> .. -> hk -> feature_dim   (activation after each hidden layer, linear features)
//! head:      feature_dim -> head_hidden -> num_classes -> sigmoid
//! ```

mod checkpoint;
mod loss;
mod objective;
mod optim;

pub use checkpoint::{read_matrices, write_matrices};
pub use loss::{
    bce_gradient, bce_supervised, bce_weighted_unsupervised, total_loss, LossWeights, PROB_EPS,
};
pub use objective::{LossBreakdown, Objective, SslBatch, UnsupervisedTargets};
pub use optim::{ema_update, lr_at, sgd_step, LrSchedule, OptimizerConfig, Velocity};

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

fn default_feature_dim() -> usize {
    128
}

fn default_head_hidden() -> usize {
    128
}

impl ModelConfig {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden_dims: Vec::new(),
            feature_dim: default_feature_dim(),
            head_hidden: default_head_hidden(),
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.head_hidden == 0 {
            return Err(Error::Config(
                "input_dim, feature_dim and head_hidden must be positive".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden_dims entries must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, extractor first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.feature_dim);
        dims.push(self.head_hidden);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Number of layers belonging to the feature extractor.
    pub fn extractor_depth(&self) -> usize {
        self.hidden_dims.len() + 1
    }
}

/// Affine layer computing `x · weight + bias`; `weight` is fan_in × fan_out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

/// All weights and biases of one model (extractor then head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    config: ModelConfig,
    layers: Vec<Layer>,
}

/// Activations retained by [`ParameterSet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub features: Array2<f64>,
    pub probs: Array2<f64>,
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ParameterSet {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        Ok(ParameterSet {
            config: config.clone(),
            layers,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, rng: &mut RandomStream) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        for layer in &mut params.layers {
            let (fan_in, fan_out) = layer.weight.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            layer
                .weight
                .mapv_inplace(|_| rng.rng_mut().random_range(-a..a));
        }
        Ok(params)
    }

    pub fn from_layers(config: &ModelConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::shape(
                "layer count",
                &[shapes.len()],
                &[layers.len()],
            ));
        }
        for (&(i, o), layer) in shapes.iter().zip(&layers) {
            if layer.weight.dim() != (i, o) || layer.bias.len() != o {
                return Err(Error::shape(
                    "layer",
                    &[i, o, o],
                    &[layer.weight.nrows(), layer.weight.ncols(), layer.bias.len()],
                ));
            }
        }
        let params = ParameterSet {
            config: config.clone(),
            layers,
        };
        if !params.all_finite() {
            return Err(Error::Numeric(
                "parameters contain non-finite values".into(),
            ));
        }
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Every scalar, layer by layer, weight (row-major) before bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn same_shape(&self, other: &ParameterSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    pub(crate) fn check_same_shape(
        &self,
        other: &ParameterSet,
        context: &'static str,
    ) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                context,
                &[self.num_parameters()],
                &[other.num_parameters()],
            ))
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParameterSet, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<ForwardPass> {
        if batch.ncols() != self.config.input_dim {
            return Err(Error::shape(
                "forward input",
                &[batch.nrows(), self.config.input_dim],
                &[batch.nrows(), batch.ncols()],
            ));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "forward input contains non-finite values".into(),
            ));
        }
        let depth = self.layers.len();
        let extractor = self.config.extractor_depth();
        let act = self.config.activation;
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut x = batch.clone();
        let mut features = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = x.dot(&layer.weight) + &layer.bias;
            inputs.push(x);
            x = if l == depth - 1 {
                z.mapv(sigmoid)
            } else if l == extractor - 1 {
                z.clone()
            } else {
                z.mapv(|v| act.apply(v))
            };
            if l == extractor - 1 {
                features = Some(x.clone());
            }
            pre.push(z);
        }
        Ok(ForwardPass {
            features: features.expect("extractor has at least one layer"),
            probs: x,
            inputs,
            pre,
        })
    }

    /// Gradient of a loss with respect to every parameter, given the loss
    /// gradient with respect to the output probabilities of `pass`.
    pub fn backward(&self, pass: &ForwardPass, dprobs: &Array2<f64>) -> Result<ParameterSet> {
        let mut grads = self.zeros_like();
        self.accumulate_backward(pass, dprobs, &mut grads)?;
        Ok(grads)
    }

    pub(crate) fn accumulate_backward(
        &self,
        pass: &ForwardPass,
        dprobs: &Array2<f64>,
        grads: &mut ParameterSet,
    ) -> Result<()> {
        if dprobs.dim() != pass.probs.dim() {
            return Err(Error::shape(
                "backward upstream gradient",
                &[pass.probs.nrows(), pass.probs.ncols()],
                &[dprobs.nrows(), dprobs.ncols()],
            ));
        }
        let depth = self.layers.len();
        let extractor = self.config.extractor_depth();
        let act = self.config.activation;
        // sigmoid'(z) = p(1 - p)
        let mut delta = dprobs * &pass.probs.mapv(|p| p * (1.0 - p));
        for l in (0..depth).rev() {
            let g = &mut grads.layers[l];
            g.weight += &pass.inputs[l].t().dot(&delta);
            g.bias += &delta.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[l].weight.t());
            // layer l-1 is linear only when it produces the features
            if l - 1 != extractor - 1 {
                Zip::from(&mut upstream)
                    .and(&pass.pre[l - 1])
                    .for_each(|u, &z| *u *= act.derivative(z));
            }
            delta = upstream;
        }
        Ok(())
    }

    /// Errors with the first layer index holding a non-finite entry.
    pub fn check_finite(&self) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: i });
            }
        }
        Ok(())
    }

    pub fn to_matrices(&self) -> Vec<Array2<f64>> {
        self.layers
            .iter()
            .flat_map(|l| {
                let b = l.bias.clone().insert_axis(Axis(0));
                [l.weight.clone(), b]
            })
            .collect()
    }

    pub fn from_matrices(config: &ModelConfig, mats: Vec<Array2<f64>>) -> Result<Self> {
        if !mats.len().is_multiple_of(2) {
            return Err(Error::Contract(
                "parameter checkpoint must hold weight/bias pairs".into(),
            ));
        }
        let mut layers = Vec::with_capacity(mats.len() / 2);
        let mut it = mats.into_iter();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            if bias.nrows() != 1 {
                return Err(Error::shape("bias row", &[1], &[bias.nrows()]));
            }
            layers.push(Layer {
                weight,
                bias: bias.row(0).to_owned(),
            });
        }
        Self::from_layers(config, layers)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_matrices(&mut f, &self.to_matrices())?;
        Ok(())
    }

    pub fn load(config: &ModelConfig, path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_matrices(config, read_matrices(&mut f)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_config() -> ModelConfig {
        ModelConfig {
            input_dim: 4,
            hidden_dims: vec![5],
            feature_dim: 3,
            head_hidden: 3,
            num_classes: 2,
            activation: Activation::Tanh,
        }
    }

    #[test]
    fn zero_params_give_half() {
        let p = ParameterSet::zeros(&small_config()).unwrap();
        let out = p.forward(&Array2::from_elem((3, 4), 1.7)).unwrap();
        assert!(out.probs.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identity_extractor_passes_input_through() {
        let cfg = ModelConfig {
            input_dim: 3,
            hidden_dims: vec![],
            feature_dim: 3,
            head_hidden: 4,
            num_classes: 2,
            activation: Activation::Relu,
        };
        let mut p = ParameterSet::zeros(&cfg).unwrap();
        p.layers_mut()[0].weight = Array2::eye(3);
        let x = array![[1.0, -2.0, 3.5], [0.0, 0.25, -7.0]];
        let out = p.forward(&x).unwrap();
        assert_eq!(out.features, x);
        assert!(out.probs.iter().all(|&v| v == 0.5));
    }

    // Independent evaluator: plain loops, no ndarray algebra.
    fn loop_forward(p: &ParameterSet, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let extractor = p.config().extractor_depth();
        let n_layers = p.layers().len();
        x.iter()
            .map(|row| {
                let mut h = row.clone();
                for (l, layer) in p.layers().iter().enumerate() {
                    let (fi, fo) = layer.weight.dim();
                    let mut out = vec![0.0; fo];
                    for o in 0..fo {
                        let mut s = layer.bias[o];
                        for i in 0..fi {
                            s += h[i] * layer.weight[[i, o]];
                        }
                        out[o] = if l == n_layers - 1 {
                            1.0 / (1.0 + (-s).exp())
                        } else if l == extractor - 1 {
                            s
                        } else {
                            s.tanh()
                        };
                    }
                    h = out;
                }
                h
            })
            .collect()
    }

    #[test]
    fn forward_matches_loop_evaluator() {
        let cfg = small_config();
        let p = ParameterSet::init(&cfg, &mut RandomStream::new(5)).unwrap();
        let x = vec![vec![0.3, -1.2, 2.0, 0.7], vec![-0.4, 0.9, 0.1, -2.2]];
        let batch = Array2::from_shape_vec((2, 4), x.concat()).unwrap();
        let out = p.forward(&batch).unwrap();
        let want = loop_forward(&p, &x);
        for i in 0..2 {
            for c in 0..2 {
                assert!((out.probs[[i, c]] - want[i][c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = ParameterSet::zeros(&small_config()).unwrap();
        assert!(matches!(
            p.forward(&Array2::zeros((2, 3))),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn config_rejects_single_class() {
        let mut cfg = small_config();
        cfg.num_classes = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut g = ParameterSet::zeros(&small_config()).unwrap();
        g.layers_mut()[2].bias[0] = f64::NAN;
        assert!(matches!(
            g.check_finite(),
            Err(Error::NonFiniteGradient { layer: 2 })
        ));
    }
}
