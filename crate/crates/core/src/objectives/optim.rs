use crate::autodiff::{ParameterStore, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_CLIP_NORM: f64 = 10.0;

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the factor applied (1.0 when no clipping happened).
pub fn clip_gradients(store: &mut ParameterStore, max_norm: f64) -> f64 {
    let norm = store.global_grad_norm();
    if norm.is_nan() || norm <= max_norm {
        return 1.0;
    }
    let factor = max_norm / norm;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.grad_mut(id).scale(factor);
    }
    factor
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every parameter of one store.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl OptimizerState {
    pub fn new(store: &ParameterStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value().shape())).collect();
        OptimizerState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update from the stored gradients.
pub fn adam_step(store: &mut ParameterStore, state: &mut OptimizerState) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Model(format!(
            "optimizer tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    state.t += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powf(state.t as f64);
    let c2 = 1.0 - beta2.powf(state.t as f64);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (m, v) = (&mut state.m[id.index()], &mut state.v[id.index()]);
        let (value, grad) = store.value_and_grad_mut(id);
        if m.shape() != value.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: m.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        let it = value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut()));
        for ((w, &g), (m, v)) in it {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
