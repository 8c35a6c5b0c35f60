use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Adadelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub name: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            name: OptimizerKind::Adam,
            lr: 5e-4,
            grad_clip: 5.0,
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const RHO: f64 = 0.95;
const ADADELTA_EPS: f64 = 1e-6;

/// Zeroes gradient entries that must not move: rows outside
/// `trainable_rows`, and every entry of frozen parameters.
pub fn mask_gradients<T: Scalar>(store: &ParamStore<T>, grads: &mut [Option<Tensor<T>>]) {
    for (id, p) in store.iter() {
        let Some(g) = grads.get_mut(id.index()).and_then(Option::as_mut) else {
            continue;
        };
        if p.frozen {
            g.data_mut().fill(T::zero());
            continue;
        }
        if let Some(rows) = &p.trainable_rows {
            let width = p.value.last_dim();
            let data = g.data_mut();
            let mut keep = vec![false; data.len() / width];
            for &r in rows {
                keep[r] = true;
            }
            for (r, row) in data.chunks_exact_mut(width).enumerate() {
                if !keep[r] {
                    row.fill(T::zero());
                }
            }
        }
    }
}

pub fn global_norm<T: Scalar>(grads: &[Option<Tensor<T>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.data().iter())
        .map(|v| {
            let x = v.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales so the global norm is at most `max_norm`. Returns the norm before
/// clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Option<Tensor<T>>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let scale = T::lit(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// First- and second-moment state, one slot per parameter.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: &OptimizerConfig, store: &ParamStore<T>) -> Result<Self> {
        if !(config.lr > 0.0) || config.grad_clip < 0.0 {
            return Err(Error::Config("learning rate must be positive and grad_clip non-negative".into()));
        }
        let zeros = || store.iter().map(|(_, p)| vec![T::zero(); p.numel()]).collect();
        Ok(Optimizer {
            config: config.clone(),
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    /// Applies one update. Gradients should already be masked and clipped.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) {
        self.step += 1;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id.index()).and_then(Option::as_ref) else {
                continue;
            };
            let p = store.get_mut(id);
            if p.frozen {
                continue;
            }
            let (m, v) = (&mut self.first[id.index()], &mut self.second[id.index()]);
            let w = p.value.data_mut();
            match self.config.name {
                OptimizerKind::Adam => {
                    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
                    let c1 = T::lit(1.0 - BETA1.powi(self.step as i32));
                    let c2 = T::lit(1.0 - BETA2.powi(self.step as i32));
                    let (lr, eps) = (T::lit(self.config.lr), T::lit(ADAM_EPS));
                    for i in 0..w.len() {
                        let gi = g.data()[i];
                        m[i] = b1 * m[i] + (T::one() - b1) * gi;
                        v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        w[i] -= lr * mh / (vh.sqrt() + eps);
                    }
                }
                OptimizerKind::Adadelta => {
                    let (rho, eps, lr) = (T::lit(RHO), T::lit(ADADELTA_EPS), T::lit(self.config.lr));
                    for i in 0..w.len() {
                        let gi = g.data()[i];
                        // m holds E[g²], v holds E[Δx²]
                        m[i] = rho * m[i] + (T::one() - rho) * gi * gi;
                        let dx = -((v[i] + eps).sqrt() / (m[i] + eps).sqrt()) * gi;
                        v[i] = rho * v[i] + (T::one() - rho) * dx * dx;
                        w[i] += lr * dx;
                    }
                }
            }
        }
    }
}
