//! First-order optimizers over named parameter lists, plus elementwise
//! gradient clipping. Moment buffers are kept per parameter tensor and the
//! bias-correction step count advances once per `step` call.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub enum OptimKind {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    /// DQN-style RMSProp: squared-gradient average with epsilon inside the
    /// square root.
    RmsProp { lr: f64, decay: f64, eps: f64 },
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct OptimizerState {
    pub kind: OptimKind,
    step: u64,
    slots: Vec<Slot>,
}

impl OptimizerState {
    /// Adam with the standard defaults (beta1 0.9, beta2 0.999, eps 1e-8).
    pub fn adam(lr: f64) -> OptimizerState {
        OptimizerState {
            kind: OptimKind::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            step: 0,
            slots: Vec::new(),
        }
    }

    /// RMSProp with the common DQN settings (decay 0.95, eps 0.01).
    pub fn rmsprop(lr: f64) -> OptimizerState {
        OptimizerState {
            kind: OptimKind::RmsProp {
                lr,
                decay: 0.95,
                eps: 0.01,
            },
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update to every parameter from its accumulated gradient.
    /// Parameters that took no part in the last backward pass see a zero
    /// gradient and stay unchanged (the step counter still advances).
    /// Non-finite gradients or updated values fail, naming the parameter.
    pub fn step(&mut self, params: &[(String, Tensor)]) -> Result<()> {
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|(_, t)| Slot {
                    m: vec![0.0; t.len()],
                    v: vec![0.0; t.len()],
                })
                .collect();
        }
        if self.slots.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer state tracks {} tensors, step got {}",
                self.slots.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step;
        for ((name, param), slot) in params.iter().zip(&mut self.slots) {
            let grad = param.grad_or_zeros();
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in {name}"
                )));
            }
            let mut value = param.to_vec();
            match self.kind {
                OptimKind::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    for i in 0..value.len() {
                        let g = grad[i];
                        slot.m[i] = beta1 * slot.m[i] + (1.0 - beta1) * g;
                        slot.v[i] = beta2 * slot.v[i] + (1.0 - beta2) * g * g;
                        let mhat = slot.m[i] / bc1;
                        let vhat = slot.v[i] / bc2;
                        value[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
                OptimKind::RmsProp { lr, decay, eps } => {
                    for i in 0..value.len() {
                        let g = grad[i];
                        slot.v[i] = decay * slot.v[i] + (1.0 - decay) * g * g;
                        value[i] -= lr * g / (slot.v[i] + eps).sqrt();
                    }
                }
            }
            if value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite value in {name} after update"
                )));
            }
            param.set_data(value)?;
        }
        Ok(())
    }
}

/// Clamp every accumulated gradient into `[lo, hi]` in place. A no-op for
/// parameters without gradients.
pub fn clip_gradients(params: &[(String, Tensor)], lo: f64, hi: f64) {
    debug_assert!(lo <= hi);
    for (_, t) in params {
        t.map_grad(|g| g.clamp(lo, hi));
    }
}
