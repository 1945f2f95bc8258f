use serde::{Deserialize, Serialize};

use super::ParameterSet;
use crate::error::{Error, Result};

/// How the learning rate evolves with the training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr0 * (1 + gamma * step / max_steps)^(-power)`.
    #[default]
    Decay,
    /// `lr0 / (1 + gamma * step / max_steps)^(-power)`, which grows with the step.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub gamma: f64,
    pub power: f64,
    pub max_steps: usize,
    pub ema_momentum: f64,
    pub schedule: LrSchedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr0: 3e-2,
            momentum: 0.9,
            gamma: 10.0,
            power: 0.75,
            max_steps: 5000,
            ema_momentum: 0.999,
            schedule: LrSchedule::Decay,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return Err(Error::Config(format!(
                "ema_momentum must lie in [0, 1], got {}",
                self.ema_momentum
            )));
        }
        if !(self.gamma > 0.0 && self.power > 0.0) || self.max_steps == 0 {
            return Err(Error::Config(
                "gamma, power and max_steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn lr_at(step: usize, cfg: &OptimizerConfig) -> f64 {
    let step = step.min(cfg.max_steps);
    let base = 1.0 + cfg.gamma * step as f64 / cfg.max_steps as f64;
    match cfg.schedule {
        LrSchedule::Decay => cfg.lr0 * base.powf(-cfg.power),
        LrSchedule::Literal => cfg.lr0 / base.powf(-cfg.power),
    }
}

/// Momentum buffer, shaped like the parameters it drives.
#[derive(Debug, Clone)]
pub struct Velocity(ParameterSet);

impl Velocity {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Velocity(params.zeros_like())
    }

    pub fn inner(&self) -> &ParameterSet {
        &self.0
    }
}

/// `v <- momentum * v + grad; theta <- theta - lr * v`.
pub fn sgd_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    velocity: &mut Velocity,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    params.check_same_shape(grads, "sgd gradient")?;
    params.check_same_shape(&velocity.0, "sgd velocity")?;
    for v in velocity.0.values_mut() {
        *v *= momentum;
    }
    velocity.0.add_scaled(grads, 1.0);
    params.add_scaled(&velocity.0, -lr);
    Ok(())
}

/// `theta_t <- m * theta_t + (1 - m) * theta_s`.
pub fn ema_update(teacher: &mut ParameterSet, student: &ParameterSet, m: f64) -> Result<()> {
    teacher.check_same_shape(student, "ema")?;
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::Contract(format!(
            "ema momentum must lie in [0, 1], got {m}"
        )));
    }
    for (t, &s) in teacher.values_mut().zip(student.values()) {
        *t = m * *t + (1.0 - m) * s;
    }
    Ok(())
}
