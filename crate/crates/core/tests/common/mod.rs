//! Shared fixtures and the finite-difference oracle used across the
//! integration suites. Everything here stays independent of the analytic
//! gradient paths it is used to check.

#![allow(dead_code)]

use rainbow_core::{PolicyModel, PreferencePair, RngStream, TokenSeq};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_H: f64 = 1e-5;

/// Central finite differences of a scalar function of the policy's logits.
pub fn finite_difference_grad(model: &PolicyModel, f: impl Fn(&PolicyModel) -> f64) -> Vec<f64> {
    let mut probe = model.clone();
    let mut grad = Vec::with_capacity(model.param_count());
    for i in 0..model.param_count() {
        let original = probe.logits()[i];
        probe.logits_mut()[i] = original + FD_H;
        let up = f(&probe);
        probe.logits_mut()[i] = original - FD_H;
        let down = f(&probe);
        probe.logits_mut()[i] = original;
        grad.push((up - down) / (2.0 * FD_H));
    }
    grad
}

/// Worst relative disagreement between two gradients, with the denominator
/// floored at 1 so near-zero entries are compared absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// A stop-terminated sequence with `free` tokens drawn before the stop.
pub fn random_sequence(rng: &mut ChaCha8Rng, vocab: usize, t_max: usize) -> TokenSeq {
    let free = rng.random_range(0..t_max.min(6));
    let mut tokens: Vec<usize> = (0..free).map(|_| rng.random_range(0..vocab - 1)).collect();
    tokens.push(vocab - 1);
    TokenSeq::new(tokens).unwrap()
}

pub fn random_pair(
    rng: &mut ChaCha8Rng,
    vocab: usize,
    contexts: usize,
    t_max: usize,
) -> PreferencePair {
    let ctx = rng.random_range(0..contexts);
    let yw = random_sequence(rng, vocab, t_max);
    let yl = random_sequence(rng, vocab, t_max);
    PreferencePair::new(ctx, yw, yl)
}

pub fn small_model(seed: u64) -> PolicyModel {
    PolicyModel::random_init(4, 2, 6, RngStream::from_seed(seed)).unwrap()
}
