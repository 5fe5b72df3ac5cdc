//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    /// Non-centered RMSProp with epsilon inside the square root.
    RmsProp {
        lr: f64,
        decay: f64,
        eps: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig::Sgd { lr }
    }

    pub fn rmsprop(lr: f64) -> Self {
        OptimizerConfig::RmsProp {
            lr,
            decay: 0.95,
            eps: 1e-5,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, param_count: usize) -> Self {
        let (first, second) = match config {
            OptimizerConfig::Sgd { .. } => (0, 0),
            OptimizerConfig::RmsProp { .. } => (0, param_count),
            OptimizerConfig::Adam { .. } => (param_count, param_count),
        };
        Self {
            config,
            first_moment: vec![0.0; first],
            second_moment: vec![0.0; second],
            steps: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], gradient: &[f64]) -> Result<()> {
        if params.len() != gradient.len() {
            return Err(Error::LengthMismatch {
                what: "gradient",
                expected: params.len(),
                found: gradient.len(),
            });
        }
        let expected = match self.config {
            OptimizerConfig::Sgd { .. } => params.len(),
            _ => self.second_moment.len(),
        };
        if expected != params.len() {
            return Err(Error::LengthMismatch {
                what: "parameters",
                expected,
                found: params.len(),
            });
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("parameters"));
        }
        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(gradient) {
                    *p -= lr * g;
                }
            }
            OptimizerConfig::RmsProp { lr, decay, eps } => {
                for ((p, g), v) in params.iter_mut().zip(gradient).zip(&mut self.second_moment) {
                    *v = decay * *v + (1.0 - decay) * g * g;
                    *p -= lr * g / (*v + eps).sqrt();
                }
            }
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(gradient)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
