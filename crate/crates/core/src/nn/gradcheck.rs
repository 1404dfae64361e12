//! Central finite differences against analytic gradients.

use alloc::vec::Vec;

use rand::seq::index::sample;

use super::params::{Grads, ParamStore};
use crate::rng;

/// `|a - n| / max(|a| + |n|, floor)`; the floor keeps exact zeros from
/// reading as large relative errors.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Compares `grads` with central differences of `loss` over up to
/// `samples_per_param` randomly chosen coordinates of every trainable
/// parameter. Returns the largest relative error.
pub fn finite_diff_check<F>(
    store: &ParamStore,
    grads: &Grads,
    mut loss: F,
    eps: f64,
    samples_per_param: usize,
    seed: u64,
) -> f64
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = rng::rng(seed);
    let mut probe = store.clone();
    let mut worst: f64 = 0.0;
    let ids: Vec<_> = store.ids().filter(|&id| store.is_trainable(id)).collect();
    for id in ids {
        let len = store.get(id).len();
        let picks = sample(&mut rng, len, samples_per_param.min(len));
        for k in picks {
            let orig = store.get(id).data[k];
            probe.get_mut(id).data[k] = orig + eps;
            let up = loss(&probe);
            probe.get_mut(id).data[k] = orig - eps;
            let down = loss(&probe);
            probe.get_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grads.get(id)[k], numeric));
        }
    }
    worst
}

/// Same comparison for the gradient with respect to a flat input vector.
pub fn input_diff_check<F>(input: &[f64], analytic: &[f64], mut loss: F, eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = input.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + eps;
        let up = loss(&x);
        x[k] = orig - eps;
        let down = loss(&x);
        x[k] = orig;
        worst = worst.max(relative_error(analytic[k], (up - down) / (2.0 * eps)));
    }
    worst
}
