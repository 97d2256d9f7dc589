//! First-order optimizers over a [`ParamStore`]'s accumulated gradients.

use alloc::vec::Vec;

use crate::error::invalid;
use crate::nn::ParamStore;
use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum OptimizerConfig {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            Self::Sgd { lr } => lr > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid!("invalid optimizer settings {self:?}"))
        }
    }
}

/// Optimizer together with its running state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub steps: u64,
    /// Adam first and second moments, one vector per parameter.
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| alloc::vec![0.0; p.value.len()]).collect();
        Ok(Self { config, steps: 0, first_moment: zeros.clone(), second_moment: zeros })
    }

    /// Applies one update from each parameter's accumulated `grad`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if self.first_moment.len() != params.len() {
            return Err(Error::SizeMismatch { left: self.first_moment.len(), right: params.len() });
        }
        if params.iter().any(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::NonFinite("gradient"));
        }
        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for p in params.iter_mut() {
                    for (w, g) in p.value.data_mut().iter_mut().zip(&p.grad) {
                        *w -= lr * g;
                    }
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let t = self.steps.min(i32::MAX as u64) as i32;
                let c1 = 1.0 - math::powi(beta1, t);
                let c2 = 1.0 - math::powi(beta2, t);
                for ((p, m), v) in params.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
                    if m.len() != p.grad.len() {
                        return Err(Error::SizeMismatch { left: m.len(), right: p.grad.len() });
                    }
                    for (((w, g), mi), vi) in p.value.data_mut().iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        *w -= lr * (*mi / c1) / (math::sqrt(*vi / c2) + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
