//! The unified preference-optimization objective and its named
//! specializations.
//!
//! One configurable loss covers the whole family: a link function applied to
//! a per-pair inner argument
//!
//! ```text
//! phi * [ beta * (l_theta(yw) - l_theta(yl))
//!         - alpha * beta * (l_ref(yw) - l_ref(yl))
//!         - (1 - alpha) * gamma
//!         - delta_r
//!         - kappa * (|yw| - |yl|) ]
//! ```
//!
//! where `l` is the (optionally length-normalized) sequence log-likelihood,
//! `alpha` mixes the frozen reference into the implied margin policy, `gamma`
//! is the target margin, `delta_r` an optional per-pair offset and `kappa` an
//! explicit length penalty. Setting the knobs recovers the classic reference
//! and reference-free objectives exactly; an optional SFT term on the winning
//! answer completes the family. The odds-ratio objective and its closed-form
//! upper bound live here too. All gradients are analytic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{GradientVector, PolicyModel};
use crate::types::{PreferencePair, TokenSeq};

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log sigmoid(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Scalar loss applied to the inner argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkFunction {
    /// `f(x) = -log sigmoid(x)`.
    Logistic,
    /// `f(x) = max(0, margin - x)`.
    Hinge { margin: f64 },
    /// `f(x) = (x - 1/2)^2`.
    Square,
}

impl LinkFunction {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            LinkFunction::Logistic => softplus(-x),
            LinkFunction::Hinge { margin } => (margin - x).max(0.0),
            LinkFunction::Square => (x - 0.5) * (x - 0.5),
        }
    }

    /// `f'(x)`. The hinge kink at `x = margin` takes subgradient 0.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            LinkFunction::Logistic => -sigmoid(-x),
            LinkFunction::Hinge { margin } => {
                if x < margin {
                    -1.0
                } else {
                    0.0
                }
            }
            LinkFunction::Square => 2.0 * (x - 0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LinkFunction::Hinge { margin } = self {
            if !(margin.is_finite() && *margin > 0.0) {
                return Err(Error::config(format!(
                    "hinge margin must be a positive real, got {margin}"
                )));
            }
        }
        Ok(())
    }
}

/// Full configuration of the unified loss.
///
/// Defaults follow the best-performing combination: `beta = 10`,
/// `alpha = 0.25`, `gamma = 0.1`, length normalization and contextual
/// scaling on, logistic link, no SFT term, no pair offsets, no explicit
/// length penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainbowConfig {
    /// Regularization strength multiplying the log-likelihood differences.
    pub beta: f64,
    /// Reference-mixing weight in `[0, 1]`: 1 keeps the frozen reference,
    /// 0 drops it entirely in favour of the constant-margin policy.
    pub alpha: f64,
    /// Target margin; enters the argument as `-(1 - alpha) * gamma`.
    pub gamma: f64,
    /// Divide sequence log-likelihoods by `|y|` before differencing.
    pub length_norm: bool,
    /// Weight of the auxiliary SFT term on the winning answer.
    pub sft_weight: f64,
    pub link: LinkFunction,
    /// Scale the argument by the per-pair entropy dispersion factor.
    pub use_dispersion: bool,
    /// Subtract a per-pair offset derived from oracle scores.
    pub use_pair_offset: bool,
    /// Scale applied to the score gap when deriving the offset.
    pub offset_scale: f64,
    /// Explicit per-token length penalty `kappa`, subtracting
    /// `kappa * (|yw| - |yl|)` from the argument.
    pub length_penalty: f64,
    /// Use the length-normalized likelihood in the SFT term instead of the
    /// raw sequence log-likelihood.
    pub sft_normalized: bool,
}

impl Default for RainbowConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            alpha: 0.25,
            gamma: 0.1,
            length_norm: true,
            sft_weight: 0.0,
            link: LinkFunction::Logistic,
            use_dispersion: true,
            use_pair_offset: false,
            offset_scale: 1.0,
            length_penalty: 0.0,
            sft_normalized: false,
        }
    }
}

impl RainbowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("sft_weight", self.sft_weight),
            ("offset_scale", self.offset_scale),
            ("length_penalty", self.length_penalty),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!(
                    "{name} must be >= 0 and finite, got {v}"
                )));
            }
        }
        self.link.validate()
    }
}

/// Result of one loss evaluation over a batch.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub loss: f64,
    pub gradient: GradientVector,
    /// The link argument of every pair, in batch order.
    pub per_pair_inner: Vec<f64>,
    /// Mean of `per_pair_inner`.
    pub mean_margin: f64,
    /// How many likelihood values hit the numerical clamp (odds-ratio loss
    /// only; always 0 for the unified loss).
    pub clamped: usize,
}

fn check_same_shape(policy: &PolicyModel, reference: &PolicyModel) -> Result<()> {
    if !policy.same_shape(reference) {
        return Err(Error::config(format!(
            "policy ({}, {}, {}) and reference ({}, {}, {}) shapes differ",
            policy.vocab(),
            policy.contexts(),
            policy.t_max(),
            reference.vocab(),
            reference.contexts(),
            reference.t_max()
        )));
    }
    Ok(())
}

/// Implicit reward `log pi(y|x) - log pi_ref(y|x)`.
pub fn implicit_reward(
    policy: &PolicyModel,
    reference: &PolicyModel,
    ctx: usize,
    y: &TokenSeq,
) -> Result<f64> {
    check_same_shape(policy, reference)?;
    Ok(policy.log_prob(ctx, y)? - reference.log_prob(ctx, y)?)
}

/// Length-normalized implicit reward `r / |y|`.
pub fn length_normalized_reward(
    policy: &PolicyModel,
    reference: &PolicyModel,
    ctx: usize,
    y: &TokenSeq,
) -> Result<f64> {
    Ok(implicit_reward(policy, reference, ctx, y)? / y.len() as f64)
}

/// Implicit reward with an explicit length penalty, `r - kappa * |y|`.
pub fn length_penalized_reward(
    policy: &PolicyModel,
    reference: &PolicyModel,
    ctx: usize,
    y: &TokenSeq,
    kappa: f64,
) -> Result<f64> {
    Ok(implicit_reward(policy, reference, ctx, y)? - kappa * y.len() as f64)
}

/// `log pi(y|x)`, divided by `|y|` when `length_norm` is set.
pub fn normalized_loglik(
    model: &PolicyModel,
    ctx: usize,
    y: &TokenSeq,
    length_norm: bool,
) -> Result<f64> {
    let lp = model.log_prob(ctx, y)?;
    Ok(if length_norm { lp / y.len() as f64 } else { lp })
}

/// Geometric-mean per-token probability `exp(log pi(y|x) / |y|)`, in (0, 1).
pub fn normalized_likelihood(model: &PolicyModel, ctx: usize, y: &TokenSeq) -> Result<f64> {
    Ok(normalized_loglik(model, ctx, y, true)?.exp())
}

fn pair_offset(pair: &PreferencePair, cfg: &RainbowConfig) -> Result<f64> {
    if !cfg.use_pair_offset {
        return Ok(0.0);
    }
    // An explicit per-pair offset is used verbatim; otherwise the offset is
    // the scaled oracle score gap.
    if let Some(offset) = pair.offset {
        return Ok(offset);
    }
    match (pair.score_w, pair.score_l) {
        (Some(w), Some(l)) => Ok(cfg.offset_scale * (w - l)),
        _ => Err(Error::input(
            "pair offsets enabled but the pair carries neither an offset nor both scores",
        )),
    }
}

/// The link argument for one pair, scaled by the dispersion factor `phi`.
pub fn inner_argument(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pair: &PreferencePair,
    cfg: &RainbowConfig,
    phi: f64,
) -> Result<f64> {
    check_same_shape(policy, reference)?;
    if !(phi.is_finite() && phi >= 0.0) {
        return Err(Error::input(format!(
            "dispersion factor must be >= 0, got {phi}"
        )));
    }
    let lw_p = normalized_loglik(policy, pair.ctx, &pair.yw, cfg.length_norm)?;
    let ll_p = normalized_loglik(policy, pair.ctx, &pair.yl, cfg.length_norm)?;
    let lw_r = normalized_loglik(reference, pair.ctx, &pair.yw, cfg.length_norm)?;
    let ll_r = normalized_loglik(reference, pair.ctx, &pair.yl, cfg.length_norm)?;
    let delta_r = pair_offset(pair, cfg)?;
    let length_gap = pair.yw.len() as f64 - pair.yl.len() as f64;
    Ok(phi
        * (cfg.beta * (lw_p - ll_p)
            - cfg.alpha * cfg.beta * (lw_r - ll_r)
            - (1.0 - cfg.alpha) * cfg.gamma
            - delta_r
            - cfg.length_penalty * length_gap))
}

/// The unified loss over a batch: mean link value of the per-pair inner
/// arguments plus the weighted SFT term, with its exact gradient in the
/// trainable policy's logits. `phi` must align with `pairs` (all ones when
/// dispersion is off). Reductions run in batch index order.
pub fn rainbow_loss(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pairs: &[PreferencePair],
    cfg: &RainbowConfig,
    phi: &[f64],
) -> Result<LossReport> {
    cfg.validate()?;
    check_same_shape(policy, reference)?;
    if pairs.is_empty() {
        return Err(Error::input("loss over an empty batch"));
    }
    if phi.len() != pairs.len() {
        return Err(Error::input(format!(
            "{} dispersion factors for {} pairs",
            phi.len(),
            pairs.len()
        )));
    }

    let inv_n = 1.0 / pairs.len() as f64;
    let mut gradient = GradientVector::zeros(policy.param_count());
    let mut per_pair_inner = Vec::with_capacity(pairs.len());
    let mut link_sum = 0.0;
    let mut sft_sum = 0.0;

    for (i, pair) in pairs.iter().enumerate() {
        let x = inner_argument(policy, reference, pair, cfg, phi[i])?;
        if !x.is_finite() {
            return Err(Error::numerical_at_pair("non-finite inner argument", i));
        }
        link_sum += cfg.link.value(x);
        per_pair_inner.push(x);

        // d f(x) / d theta = f'(x) * phi * beta * (grad l(yw) - grad l(yl)).
        let weight = cfg.link.derivative(x) * phi[i] * cfg.beta * inv_n;
        let norm_w = if cfg.length_norm {
            pair.yw.len() as f64
        } else {
            1.0
        };
        let norm_l = if cfg.length_norm {
            pair.yl.len() as f64
        } else {
            1.0
        };
        policy.accumulate_grad_log_prob(pair.ctx, &pair.yw, weight / norm_w, &mut gradient)?;
        policy.accumulate_grad_log_prob(pair.ctx, &pair.yl, -weight / norm_l, &mut gradient)?;

        if cfg.sft_weight > 0.0 {
            let norm = if cfg.sft_normalized {
                pair.yw.len() as f64
            } else {
                1.0
            };
            sft_sum += -policy.log_prob(pair.ctx, &pair.yw)? / norm;
            policy.accumulate_grad_log_prob(
                pair.ctx,
                &pair.yw,
                -cfg.sft_weight * inv_n / norm,
                &mut gradient,
            )?;
        }
    }

    let loss = link_sum * inv_n + cfg.sft_weight * sft_sum * inv_n;
    if !loss.is_finite() || !gradient.is_finite() {
        return Err(Error::numerical("non-finite loss or gradient"));
    }
    let mean_margin = per_pair_inner.iter().sum::<f64>() * inv_n;
    Ok(LossReport {
        loss,
        gradient,
        per_pair_inner,
        mean_margin,
        clamped: 0,
    })
}

/// Clamp bound keeping geometric-mean likelihoods strictly inside (0, 1)
/// before forming odds.
pub const ODDS_CLAMP: f64 = 1e-12;

fn clamp_prob(p: f64, clamped: &mut usize) -> f64 {
    if p < ODDS_CLAMP {
        *clamped += 1;
        ODDS_CLAMP
    } else if p > 1.0 - ODDS_CLAMP {
        *clamped += 1;
        1.0 - ODDS_CLAMP
    } else {
        p
    }
}

/// Reference-free odds-ratio loss: mean over pairs of
/// `-log p(yw) - po_weight * log sigmoid(log odds(yw) - log odds(yl))` with
/// `p` the geometric-mean per-token likelihood and `odds(p) = p / (1 - p)`.
pub fn orpo_loss(
    policy: &PolicyModel,
    pairs: &[PreferencePair],
    po_weight: f64,
) -> Result<LossReport> {
    if pairs.is_empty() {
        return Err(Error::input("loss over an empty batch"));
    }
    if !(po_weight.is_finite() && po_weight >= 0.0) {
        return Err(Error::config(format!(
            "odds-ratio weight must be >= 0, got {po_weight}"
        )));
    }

    let inv_n = 1.0 / pairs.len() as f64;
    let mut gradient = GradientVector::zeros(policy.param_count());
    let mut per_pair_inner = Vec::with_capacity(pairs.len());
    let mut loss_sum = 0.0;
    let mut clamped = 0;

    for (i, pair) in pairs.iter().enumerate() {
        let u_w = normalized_loglik(policy, pair.ctx, &pair.yw, true)?;
        let u_l = normalized_loglik(policy, pair.ctx, &pair.yl, true)?;
        let p_w_raw = u_w.exp();
        let p_l_raw = u_l.exp();
        let before = clamped;
        let p_w = clamp_prob(p_w_raw, &mut clamped);
        let w_clamped = clamped > before;
        let before = clamped;
        let p_l = clamp_prob(p_l_raw, &mut clamped);
        let l_clamped = clamped > before;

        let z = (p_w.ln() - (1.0 - p_w).ln()) - (p_l.ln() - (1.0 - p_l).ln());
        if !z.is_finite() {
            return Err(Error::numerical_at_pair(
                "non-finite odds-ratio argument",
                i,
            ));
        }
        loss_sum += -u_w + po_weight * softplus(-z);
        per_pair_inner.push(z);

        // d(-log sigmoid(z))/dz = -sigmoid(-z); dz/du = 1/(1 - p) on each
        // side (zero where the clamp is active), with u the normalized
        // log-likelihood so grads pick up a 1/|y| factor.
        let dpo_dz = -po_weight * sigmoid(-z);
        let mut scale_w = -1.0; // SFT part, d(-u_w)/du_w
        if !w_clamped {
            scale_w += dpo_dz / (1.0 - p_w);
        }
        let mut scale_l = 0.0;
        if !l_clamped {
            scale_l += -dpo_dz / (1.0 - p_l);
        }
        policy.accumulate_grad_log_prob(
            pair.ctx,
            &pair.yw,
            scale_w * inv_n / pair.yw.len() as f64,
            &mut gradient,
        )?;
        policy.accumulate_grad_log_prob(
            pair.ctx,
            &pair.yl,
            scale_l * inv_n / pair.yl.len() as f64,
            &mut gradient,
        )?;
    }

    let loss = loss_sum * inv_n;
    if !loss.is_finite() || !gradient.is_finite() {
        return Err(Error::numerical("non-finite loss or gradient"));
    }
    let mean_margin = per_pair_inner.iter().sum::<f64>() * inv_n;
    Ok(LossReport {
        loss,
        gradient,
        per_pair_inner,
        mean_margin,
        clamped,
    })
}

/// The odds-ratio preference term and its closed-form upper bound.
///
/// For `delta = log p_w - log p_l >= 0`:
/// `po_term = -log sigmoid(log odds(p_w) - log odds(p_l))` is bounded above
/// by `-log sigmoid(delta / (1 - p_l))`, with a gap of order `delta^2`.
pub fn orpo_po_bound(p_w: f64, p_l: f64) -> Result<(f64, f64)> {
    for (name, p) in [("p_w", p_w), ("p_l", p_l)] {
        if !(p.is_finite() && 0.0 < p && p < 1.0) {
            return Err(Error::input(format!("{name} must lie in (0, 1), got {p}")));
        }
    }
    let delta = p_w.ln() - p_l.ln();
    if delta < 0.0 {
        return Err(Error::input(format!(
            "bound requires log p_w - log p_l >= 0, got {delta}"
        )));
    }
    let z = (p_w.ln() - (1.0 - p_w).ln()) - (p_l.ln() - (1.0 - p_l).ln());
    let po_term = softplus(-z);
    let bound = softplus(-delta / (1.0 - p_l));
    Ok((po_term, bound))
}
