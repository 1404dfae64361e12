use alloc::vec;
use alloc::vec::Vec;

use super::params::{Grads, ParamStore};
use crate::error::contract;
use crate::Result;

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
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter of a store (non-trainable
/// entries keep empty moments and are skipped).
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let moments = || -> Vec<Vec<f64>> {
            store
                .ids()
                .map(|id| {
                    if store.is_trainable(id) {
                        vec![0.0; store.get(id).len()]
                    } else {
                        Vec::new()
                    }
                })
                .collect()
        };
        AdamState {
            config,
            step: 0,
            m: moments(),
            v: moments(),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(store: &mut ParamStore, grads: &Grads, state: &mut AdamState) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(contract!(
            "gradients cover {} of {} parameters",
            grads.len(),
            store.len()
        ));
    }
    let ids: Vec<_> = store.ids().collect();
    for &id in &ids {
        if store.is_trainable(id) && grads.get(id).len() != store.get(id).len() {
            return Err(contract!("missing gradient for {}", store.name(id)));
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - libm::pow(beta1, state.step as f64);
    let bc2 = 1.0 - libm::pow(beta2, state.step as f64);
    for id in ids {
        if !store.is_trainable(id) {
            continue;
        }
        let g = grads.get(id);
        let m = &mut state.m[id.index()];
        let v = &mut state.v[id.index()];
        let p = &mut store.get_mut(id).data;
        for k in 0..p.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p[k] -= lr * mhat / (libm::sqrt(vhat) + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;
    use crate::rng;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.register("x", &[1], Init::Constant(x), true, &mut rng::rng(0)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.7);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let g = Grads::zeros_like(&s);
        adam_step(&mut s, &g, &mut st).unwrap();
        assert_eq!(s.get(s.id("x").unwrap()).data[0], 0.7);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_is_learning_rate() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let mut g = Grads::zeros_like(&s);
        g.fill(1.0);
        adam_step(&mut s, &g, &mut st).unwrap();
        // m_hat = v_hat = 1, so the update is -lr / (1 + eps).
        let x = s.get(s.id("x").unwrap()).data[0];
        assert!((x + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn minimizes_square() {
        let mut s = scalar_store(1.0);
        let id = s.id("x").unwrap();
        let mut st = AdamState::new(&s, AdamConfig::default());
        let mut steps = 0;
        while s.get(id).data[0].abs() >= 0.1 {
            let mut g = Grads::zeros_like(&s);
            g.get_mut(id)[0] = 2.0 * s.get(id).data[0];
            adam_step(&mut s, &g, &mut st).unwrap();
            steps += 1;
            assert!(steps <= 2000);
        }
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut s = scalar_store(1.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let other = Grads::zeros_like(&ParamStore::new());
        assert!(adam_step(&mut s, &other, &mut st).is_err());
    }
}
