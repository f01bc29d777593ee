//! Contextual scaling: a per-pair factor derived from the reference policy's
//! predictive entropies.
//!
//! High-entropy (uncertain) pairs get a factor near zero, confident pairs a
//! larger one. The normalized-entropy ratio is clamped into
//! `[ratio_floor, 1]` before the log, so the factor is always finite and
//! non-negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{PolicyModel, Prev};
use crate::types::PreferencePair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersionConfig {
    /// Lower clamp for the normalized-entropy ratio.
    pub ratio_floor: f64,
    /// Average the summed step entropies over the `N - 1` transitions. The
    /// literal sum (no averaging) saturates the ratio at 1 for long
    /// sequences; it stays available behind this flag.
    pub per_token_average: bool,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        Self {
            ratio_floor: 1e-6,
            per_token_average: true,
        }
    }
}

impl DispersionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_floor.is_finite() && 0.0 < self.ratio_floor && self.ratio_floor < 1.0) {
            return Err(Error::config(format!(
                "ratio_floor must lie in (0, 1), got {}",
                self.ratio_floor
            )));
        }
        Ok(())
    }
}

/// Dispersion factor `phi >= 0` for one pair under the reference policy.
///
/// With `N = max(|yw|, |yl|)`, sums the conditional step entropies at each
/// sequence's token `i` for `i = 1 .. N-1` (the shorter sequence keeps
/// reusing its final token as state), normalizes by `2 (N-1) log n` (or
/// `2 log n` without averaging), clamps the ratio into `[floor, 1]` and
/// returns its negative log. A pair with `N = 1` has no transitions to score
/// and gets `phi = 0`.
///
/// The pair must be valid for the reference model's vocabulary and contexts.
pub fn dispersion(reference: &PolicyModel, pair: &PreferencePair, cfg: &DispersionConfig) -> f64 {
    let n_steps = pair.yw.len().max(pair.yl.len());
    if n_steps == 1 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 1..n_steps {
        let prev_w = pair.yw.tokens()[i.min(pair.yw.len()) - 1];
        let prev_l = pair.yl.tokens()[i.min(pair.yl.len()) - 1];
        sum += reference.conditional_entropy(pair.ctx, Prev::Token(prev_w));
        sum += reference.conditional_entropy(pair.ctx, Prev::Token(prev_l));
    }
    let log_n = (reference.vocab() as f64).ln();
    let ratio = if cfg.per_token_average {
        sum / (2.0 * (n_steps - 1) as f64 * log_n)
    } else {
        sum / (2.0 * log_n)
    };
    // Summation noise must not leave a spurious factor on maximum-entropy
    // pairs: anything within 1e-12 of full entropy counts as full.
    if ratio >= 1.0 - 1e-12 {
        return 0.0;
    }
    -ratio.clamp(cfg.ratio_floor, 1.0).ln()
}
