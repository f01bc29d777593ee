//! Preference-pair construction: the best/worst-of-K baseline and the
//! percentile rejection sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyModel;
use crate::rng::RngStream;
use crate::types::{PreferencePair, TokenSeq};

/// A reward oracle scoring one generation in a context.
pub trait Reward {
    fn score(&self, ctx: usize, y: &TokenSeq) -> f64;
}

impl<F: Fn(usize, &TokenSeq) -> f64> Reward for F {
    fn score(&self, ctx: usize, y: &TokenSeq) -> f64 {
        self(ctx, y)
    }
}

/// Which pipeline builds the pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMethod {
    BestWorstOfK,
    RsPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Candidates per prompt for the best/worst baseline.
    pub k: usize,
    /// Rejection-sampling candidate pool size `N`.
    pub pool_size: usize,
    /// Accepted-set size `M <= N`.
    pub accept_size: usize,
    /// Acceptance temperature; smaller values concentrate the accepted set
    /// on high percentiles.
    pub temperature: f64,
    /// Attempt cap for the acceptance loop; `None` means `100 * pool_size`.
    pub max_attempts: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k: 5,
            pool_size: 32,
            accept_size: 8,
            temperature: 0.2,
            max_attempts: None,
        }
    }
}

impl SamplerConfig {
    pub fn effective_max_attempts(&self) -> usize {
        self.max_attempts.unwrap_or(100 * self.pool_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config(format!("k must be >= 2, got {}", self.k)));
        }
        if self.pool_size < 2 || self.accept_size < 2 {
            return Err(Error::config(format!(
                "pool_size and accept_size must be >= 2, got {} and {}",
                self.pool_size, self.accept_size
            )));
        }
        if self.accept_size > self.pool_size {
            return Err(Error::config(format!(
                "accept_size {} exceeds pool_size {}",
                self.accept_size, self.pool_size
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.effective_max_attempts() == 0 {
            return Err(Error::config("max_attempts must be positive"));
        }
        Ok(())
    }
}

const CANDIDATE_LANE: u64 = 0;
const ACCEPT_LANE: u64 = 1;

/// Candidate `i` always comes from substream `i` of the candidate lane, so
/// the two pipelines draw identical pools from identical parent streams.
fn draw_candidates(
    policy: &PolicyModel,
    ctx: usize,
    count: usize,
    stream: RngStream,
) -> Vec<TokenSeq> {
    let lane = stream.substream(CANDIDATE_LANE);
    (0..count)
        .map(|i| policy.sample(ctx, lane.substream(i as u64)))
        .collect()
}

fn argmax_by_score(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn argmin_by_score(scores: &[f64]) -> usize {
    let mut worst = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[worst] {
            worst = i;
        }
    }
    worst
}

/// Draw `k` candidates, score them, and pair the best against the worst
/// (ties resolved toward the lowest candidate index). A pool of identical
/// scores still yields a pair, flagged by `score_w == score_l`.
pub fn best_worst_of_k<R: Reward + ?Sized>(
    policy: &PolicyModel,
    reward: &R,
    ctx: usize,
    cfg: &SamplerConfig,
    stream: RngStream,
) -> Result<PreferencePair> {
    cfg.validate()?;
    let candidates = draw_candidates(policy, ctx, cfg.k, stream);
    let scores: Vec<f64> = candidates.iter().map(|y| reward.score(ctx, y)).collect();
    let best = argmax_by_score(&scores);
    let worst = argmin_by_score(&scores);
    Ok(
        PreferencePair::new(ctx, candidates[best].clone(), candidates[worst].clone())
            .with_scores(scores[best], scores[worst]),
    )
}

/// Ascending-rank percentiles `P_i = rank_i / N`; ties take the earlier
/// index first, so the maximum reward always gets `P = 1`.
pub fn percentiles(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rewards[a].total_cmp(&rewards[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = (rank + 1) as f64 / n as f64;
    }
    out
}

/// Probability of accepting a candidate at `percentile` under `temperature`.
pub fn acceptance_probability(percentile: f64, temperature: f64) -> f64 {
    ((percentile - 1.0) / temperature).exp()
}

/// The acceptance decision applied to one uniform draw.
pub fn accepts(percentile: f64, temperature: f64, u: f64) -> bool {
    u <= acceptance_probability(percentile, temperature)
}

/// Diagnostic view of one rejection-sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct RsTrace {
    /// Accepted candidate indices, in acceptance order (backfills last).
    pub accepted: Vec<usize>,
    /// Percentiles of the full candidate pool.
    pub percentiles: Vec<f64>,
    /// Attempts consumed by the stochastic loop.
    pub attempts: usize,
    /// How many accepted slots came from the deterministic backfill.
    pub backfilled: usize,
}

/// Percentile rejection sampling. Generates a pool of `N` candidates, ranks
/// them into percentiles, then cycles through the pool accepting candidate
/// `i` with probability `exp((P_i - 1) / temperature)` until `M` distinct
/// candidates are accepted or the attempt cap is hit; any shortfall is
/// backfilled with the highest-percentile leftovers. Returns the accepted
/// set's best-vs-worst pair by reward.
pub fn rs_plus<R: Reward + ?Sized>(
    policy: &PolicyModel,
    reward: &R,
    ctx: usize,
    cfg: &SamplerConfig,
    stream: RngStream,
) -> Result<PreferencePair> {
    Ok(rs_plus_with_trace(policy, reward, ctx, cfg, stream)?.0)
}

/// [`rs_plus`] plus the acceptance trace, for diagnostics and statistical
/// checks.
pub fn rs_plus_with_trace<R: Reward + ?Sized>(
    policy: &PolicyModel,
    reward: &R,
    ctx: usize,
    cfg: &SamplerConfig,
    stream: RngStream,
) -> Result<(PreferencePair, RsTrace)> {
    cfg.validate()?;
    let n = cfg.pool_size;
    let candidates = draw_candidates(policy, ctx, n, stream);
    let scores: Vec<f64> = candidates.iter().map(|y| reward.score(ctx, y)).collect();
    let pcts = percentiles(&scores);

    let mut accepted: Vec<usize> = Vec::with_capacity(cfg.accept_size);
    let mut in_set = vec![false; n];
    let mut rng = stream.substream(ACCEPT_LANE).rng();
    let mut attempts = 0usize;
    let cap = cfg.effective_max_attempts();
    while accepted.len() < cfg.accept_size && attempts < cap {
        let i = attempts % n;
        attempts += 1;
        if in_set[i] {
            continue;
        }
        let u: f64 = rng.random();
        if accepts(pcts[i], cfg.temperature, u) {
            in_set[i] = true;
            accepted.push(i);
        }
    }

    let mut backfilled = 0;
    if accepted.len() < cfg.accept_size {
        let mut rest: Vec<usize> = (0..n).filter(|&i| !in_set[i]).collect();
        rest.sort_by(|&a, &b| pcts[b].total_cmp(&pcts[a]));
        for i in rest {
            if accepted.len() == cfg.accept_size {
                break;
            }
            in_set[i] = true;
            accepted.push(i);
            backfilled += 1;
        }
    }

    // Ties break toward the lowest candidate index: the accepted list keeps
    // acceptance order, so compare on the original indices.
    let mut best = accepted[0];
    let mut worst = accepted[0];
    for &i in &accepted[1..] {
        if scores[i] > scores[best] || (scores[i] == scores[best] && i < best) {
            best = i;
        }
        if scores[i] < scores[worst] || (scores[i] == scores[worst] && i < worst) {
            worst = i;
        }
    }
    let pair = PreferencePair::new(ctx, candidates[best].clone(), candidates[worst].clone())
        .with_scores(scores[best], scores[worst]);
    let trace = RsTrace {
        accepted,
        percentiles: pcts,
        attempts,
        backfilled,
    };
    Ok((pair, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_policy() -> PolicyModel {
        PolicyModel::random_init(4, 2, 6, RngStream::from_seed(17)).unwrap()
    }

    // Scores a sequence by its leading token; easy to reason about.
    fn first_token_reward(_ctx: usize, y: &TokenSeq) -> f64 {
        y.tokens()[0] as f64
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(
            percentiles(&[0.9, 0.5, 0.1, 0.3]),
            vec![1.0, 0.75, 0.25, 0.5]
        );
        assert_eq!(
            percentiles(&[2.0, 2.0, 2.0, 2.0]),
            vec![0.25, 0.5, 0.75, 1.0]
        );
        assert_eq!(percentiles(&[7.0]), vec![1.0]);
    }

    #[test]
    fn best_worst_orders_two_candidates() {
        let policy = toy_policy();
        let cfg = SamplerConfig {
            k: 2,
            ..SamplerConfig::default()
        };
        for seed in 0..50 {
            let pair = best_worst_of_k(
                &policy,
                &first_token_reward,
                0,
                &cfg,
                RngStream::from_seed(seed),
            )
            .unwrap();
            assert!(pair.score_w.unwrap() >= pair.score_l.unwrap());
        }
    }

    #[test]
    fn deterministic_policy_yields_degenerate_pair() {
        let mut policy = PolicyModel::uniform(3, 1, 6).unwrap();
        // Every row forces token 0, so all candidates are equal.
        let n = policy.vocab();
        for row in 0..(n + 1) {
            policy.logits_mut()[row * n] = 1e6;
        }
        let pair = best_worst_of_k(
            &policy,
            &first_token_reward,
            0,
            &SamplerConfig::default(),
            RngStream::from_seed(1),
        )
        .unwrap();
        assert!(pair.is_degenerate());
        assert_eq!(pair.yw, pair.yl);
    }

    #[test]
    fn top_percentile_is_always_accepted() {
        let prob = acceptance_probability(1.0, 0.05);
        assert_eq!(prob, 1.0);
        // With an accept size of 2 and tiny temperature, only the top
        // percentile candidate passes the stochastic gate reliably.
        let policy = toy_policy();
        let cfg = SamplerConfig {
            pool_size: 8,
            accept_size: 2,
            temperature: 0.01,
            ..SamplerConfig::default()
        };
        for seed in 0..20 {
            let pair = rs_plus(
                &policy,
                &first_token_reward,
                1,
                &cfg,
                RngStream::from_seed(seed),
            )
            .unwrap();
            assert!(pair.score_w.unwrap() >= pair.score_l.unwrap());
        }
    }

    #[test]
    fn acceptance_probability_example() {
        let p = acceptance_probability(0.25, 0.25);
        assert!((p - (-3.0f64).exp()).abs() < 1e-15);
        assert!((p - 0.049787).abs() < 1e-6);
    }

    #[test]
    fn rs_plus_is_deterministic_per_stream() {
        let policy = toy_policy();
        let cfg = SamplerConfig::default();
        let s = RngStream::from_seed(33).substream(5);
        let a = rs_plus(&policy, &first_token_reward, 0, &cfg, s).unwrap();
        let b = rs_plus(&policy, &first_token_reward, 0, &cfg, s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    #[allow(clippy::field_reassign_with_default)]
    fn config_validation() {
        let mut cfg = SamplerConfig::default();
        cfg.k = 1;
        assert!(cfg.validate().is_err());
        cfg.k = 2;
        cfg.accept_size = 40;
        assert!(cfg.validate().is_err());
        cfg.accept_size = 8;
        cfg.temperature = 0.0;
        assert!(cfg.validate().is_err());
        cfg.temperature = 0.2;
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.effective_max_attempts(), 3200);
    }
}
