//! Seeded first-order training loop with linear warm-up.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dispersion::{dispersion, DispersionConfig};
use crate::error::{Error, Result};
use crate::losses::{rainbow_loss, RainbowConfig};
use crate::policy::PolicyModel;
use crate::rng::RngStream;
use crate::types::{PreferenceDataset, PreferencePair};

/// Stream id for epoch shuffling.
pub const TRAIN_STREAM: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Warm-up length: a ratio of the total steps when in `(0, 1)`, an
    /// absolute step count when `>= 1`, none when `0`.
    pub warmup: f64,
    pub optimizer: OptimizerKind,
    /// Optional max-norm gradient clip; off by default.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-6,
            epochs: 3,
            batch_size: 32,
            warmup: 150.0,
            optimizer: OptimizerKind::adam(),
            max_grad_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!(
                "lr must be finite and >= 0, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be >= 1"));
        }
        if !(self.warmup.is_finite() && self.warmup >= 0.0) {
            return Err(Error::config(format!(
                "warmup must be >= 0, got {}",
                self.warmup
            )));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            let ok = (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0;
            if !ok {
                return Err(Error::config("adam moments must lie in [0, 1), eps > 0"));
            }
        }
        if let Some(c) = self.max_grad_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::config("max_grad_norm must be positive"));
            }
        }
        Ok(())
    }

    /// Warm-up steps implied for a run of `total_steps`.
    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        if self.warmup >= 1.0 {
            self.warmup.round() as usize
        } else if self.warmup > 0.0 {
            (self.warmup * total_steps as f64).ceil() as usize
        } else {
            0
        }
    }
}

/// Linear ramp `0 -> lr` over the warm-up steps, constant afterwards.
pub fn lr_at_step(cfg: &TrainConfig, step: usize, total_steps: usize) -> Result<f64> {
    if step >= total_steps {
        return Err(Error::input(format!(
            "step {step} out of range for {total_steps} total steps"
        )));
    }
    let w = cfg.warmup_steps(total_steps);
    if w >= total_steps {
        return Err(Error::config(format!(
            "warm-up of {w} steps swallows the whole run of {total_steps}"
        )));
    }
    if w == 0 {
        Ok(cfg.lr)
    } else {
        Ok(cfg.lr * (step as f64 / w as f64).min(1.0))
    }
}

struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl OptimizerState {
    fn new(params: usize) -> Self {
        Self {
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    fn apply(&mut self, kind: OptimizerKind, lr: f64, params: &mut [f64], grad: &[f64]) {
        match kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Train a policy on a preference dataset; returns the final policy and the
/// per-step loss trace. Bit-deterministic in `(configs, seed)`.
pub fn train(
    init: &PolicyModel,
    reference: &PolicyModel,
    data: &PreferenceDataset,
    loss_cfg: &RainbowConfig,
    dispersion_cfg: &DispersionConfig,
    train_cfg: &TrainConfig,
) -> Result<(PolicyModel, Vec<f64>)> {
    train_with_hook(
        init,
        reference,
        data,
        loss_cfg,
        dispersion_cfg,
        train_cfg,
        |_, _| Ok(()),
    )
}

/// [`train`] with a callback after every completed epoch (for checkpointing
/// and per-epoch evaluation). The hook never touches the training streams,
/// so its presence cannot change the result.
pub fn train_with_hook(
    init: &PolicyModel,
    reference: &PolicyModel,
    data: &PreferenceDataset,
    loss_cfg: &RainbowConfig,
    dispersion_cfg: &DispersionConfig,
    train_cfg: &TrainConfig,
    mut after_epoch: impl FnMut(usize, &PolicyModel) -> Result<()>,
) -> Result<(PolicyModel, Vec<f64>)> {
    loss_cfg.validate()?;
    dispersion_cfg.validate()?;
    train_cfg.validate()?;
    data.validate()?;
    if !init.same_shape(reference) {
        return Err(Error::config("policy and reference shapes differ"));
    }
    if data.vocab != init.vocab() || data.contexts != init.contexts() {
        return Err(Error::config(format!(
            "dataset world ({}, {}) does not match the policy ({}, {})",
            data.vocab,
            data.contexts,
            init.vocab(),
            init.contexts()
        )));
    }
    for (i, pair) in data.pairs.iter().enumerate() {
        for y in [&pair.yw, &pair.yl] {
            y.validate_for(init.vocab(), init.t_max())
                .map_err(|e| Error::config(format!("pair {i}: {e}")))?;
        }
    }

    let n = data.len();
    let batches_per_epoch = n.div_ceil(train_cfg.batch_size);
    let total_steps = train_cfg.epochs * batches_per_epoch;
    // Surfaces a bad warm-up before any work happens.
    lr_at_step(train_cfg, 0, total_steps)?;

    // Dispersion factors depend only on the frozen reference; compute once.
    let phi_all: Vec<f64> = if loss_cfg.use_dispersion {
        data.pairs
            .iter()
            .map(|p| dispersion(reference, p, dispersion_cfg))
            .collect()
    } else {
        vec![1.0; n]
    };

    let mut policy = init.clone();
    let mut opt = OptimizerState::new(policy.param_count());
    let mut trace = Vec::with_capacity(total_steps);
    let shuffle_root = RngStream::new(train_cfg.seed, TRAIN_STREAM);

    let mut indices: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    for epoch in 0..train_cfg.epochs {
        indices.sort_unstable();
        let mut rng = shuffle_root.substream(epoch as u64).rng();
        indices.shuffle(&mut rng);

        for batch in indices.chunks(train_cfg.batch_size) {
            let pairs: Vec<PreferencePair> = batch.iter().map(|&i| data.pairs[i].clone()).collect();
            let phi: Vec<f64> = batch.iter().map(|&i| phi_all[i]).collect();
            let report = rainbow_loss(&policy, reference, &pairs, loss_cfg, &phi)
                .map_err(|e| at_step(e, step, loss_cfg, train_cfg))?;
            trace.push(report.loss);

            let lr = lr_at_step(train_cfg, step, total_steps)?;
            let mut gradient = report.gradient;
            if let Some(cap) = train_cfg.max_grad_norm {
                let norm = gradient
                    .as_slice()
                    .iter()
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > cap {
                    gradient.scale(cap / norm);
                }
            }
            opt.apply(
                train_cfg.optimizer,
                lr,
                policy.logits_mut(),
                gradient.as_slice(),
            );
            if !policy.logits().iter().all(|v| v.is_finite()) {
                return Err(at_step(
                    Error::numerical("parameters left the finite range"),
                    step,
                    loss_cfg,
                    train_cfg,
                ));
            }
            step += 1;
        }
        after_epoch(epoch, &policy)?;
    }

    Ok((policy, trace))
}

fn at_step(err: Error, step: usize, loss_cfg: &RainbowConfig, train_cfg: &TrainConfig) -> Error {
    match err {
        Error::Numerical { msg, pair, .. } => Error::Numerical {
            msg: format!(
                "{msg}; loss config {}; train config {}",
                serde_json::to_string(loss_cfg).unwrap_or_default(),
                serde_json::to_string(train_cfg).unwrap_or_default()
            ),
            pair,
            step: Some(step),
        },
        other => other,
    }
}
