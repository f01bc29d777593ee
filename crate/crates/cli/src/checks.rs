//! The runtime invariant suite behind `rainbow check`: gradient fidelity
//! against central finite differences, specialization equalities against
//! independently coded objectives, the odds-ratio bound sweep, rejection
//! sampling statistics, and assorted module invariants.
//!
//! Every oracle in this file is written from the scalar definitions using
//! nothing but `log_prob`, so a defect in the loss layer cannot cancel out
//! of the comparison.

use rand::Rng;

use rainbow_core::{
    acceptance_probability, accepts, best_worst_of_k, dispersion, generate_dataset, inner_argument,
    orpo_po_bound, percentiles, rainbow_loss, rs_plus_with_trace, DispersionConfig, LinkFunction,
    PolicyModel, PreferencePair, Prev, RainbowConfig, RngStream, SampleMethod, SamplerConfig,
    SyntheticReward, TokenSeq,
};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub type CheckResult = std::result::Result<String, String>;

type NamedCheck = (&'static str, fn() -> CheckResult);

/// Run the whole suite; failures carry the offending inputs in the detail.
pub fn run_all() -> Vec<CheckOutcome> {
    let checks: Vec<NamedCheck> = vec![
        ("substream-independence", substream_independence),
        ("sequence-mass-conservation", sequence_mass_conservation),
        ("log-prob-gradient-fd", log_prob_gradient_fd),
        ("unified-loss-gradient-fd", unified_loss_gradient_fd),
        ("specialization-equalities", specialization_equalities),
        ("mixing-affinity", mixing_affinity),
        ("odds-ratio-bound", odds_ratio_bound),
        (
            "rejection-sampling-statistics",
            rejection_sampling_statistics,
        ),
        ("dispersion-range", dispersion_range),
        ("percentile-ranking", percentile_ranking),
        ("pipeline-determinism", pipeline_determinism),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f() {
            Ok(detail) => CheckOutcome {
                name,
                passed: true,
                detail,
            },
            Err(detail) => CheckOutcome {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Shared oracle machinery (independent of the loss layer's internals).
// ---------------------------------------------------------------------------

fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

const FD_H: f64 = 1e-5;

fn fd_gradient(model: &PolicyModel, f: &dyn Fn(&PolicyModel) -> f64) -> Vec<f64> {
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

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

fn ensure_close(name: &str, ours: f64, oracle: f64, tol: f64) -> std::result::Result<(), String> {
    let diff = (ours - oracle).abs();
    if diff <= tol {
        Ok(())
    } else {
        Err(format!(
            "{name}: unified loss {ours} vs oracle {oracle}, |diff| {diff:.3e} > {tol:.0e}"
        ))
    }
}

fn random_sequence(rng: &mut impl Rng, vocab: usize, max_free: usize) -> TokenSeq {
    let free = rng.random_range(0..max_free);
    let mut tokens: Vec<usize> = (0..free).map(|_| rng.random_range(0..vocab - 1)).collect();
    tokens.push(vocab - 1);
    TokenSeq::new(tokens).unwrap()
}

fn random_batch(seed: u64, n_pairs: usize) -> (PolicyModel, PolicyModel, Vec<PreferencePair>) {
    let policy = PolicyModel::random_init(4, 2, 6, RngStream::from_seed(seed)).unwrap();
    let reference = PolicyModel::random_init(4, 2, 6, RngStream::from_seed(seed ^ 0xbeef)).unwrap();
    let mut rng = RngStream::from_seed(seed.wrapping_mul(131) ^ 0x77).rng();
    let pairs = (0..n_pairs)
        .map(|_| {
            let ctx = rng.random_range(0..2);
            PreferencePair::new(
                ctx,
                random_sequence(&mut rng, 4, 5),
                random_sequence(&mut rng, 4, 5),
            )
        })
        .collect();
    (policy, reference, pairs)
}

fn lp(model: &PolicyModel, pair: &PreferencePair, winner: bool) -> f64 {
    let y = if winner { &pair.yw } else { &pair.yl };
    model.log_prob(pair.ctx, y).unwrap()
}

// ---------------------------------------------------------------------------
// Individual checks.
// ---------------------------------------------------------------------------

pub fn substream_independence() -> CheckResult {
    let root = RngStream::from_seed(2024);
    let draw = |s: RngStream| -> Vec<f64> {
        let mut rng = s.rng();
        (0..1000).map(|_| rng.random::<f64>()).collect()
    };
    if draw(root.substream(3)) != draw(root.substream(3)) {
        return Err("substream(3) is not reproducible".into());
    }
    let a = draw(root.substream(1));
    let b = draw(root.substream(2));
    let overlap = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    if overlap > 10 {
        return Err(format!("substreams 1 and 2 agree in {overlap}/1000 draws"));
    }
    if draw(root.substream(1).substream(1)) == draw(root.substream(1)) {
        return Err("nested substream replays its parent".into());
    }
    Ok("substreams reproducible and decorrelated".into())
}

pub fn sequence_mass_conservation() -> CheckResult {
    fn prob_no_stop(model: &PolicyModel, ctx: usize, prev: Prev, left: usize) -> f64 {
        if left == 0 {
            return 1.0;
        }
        let stop = model.stop_token();
        let row = model.row(ctx, prev);
        let lse = rainbow_core::policy::log_sum_exp(row);
        (0..stop)
            .map(|t| (row[t] - lse).exp() * prob_no_stop(model, ctx, Prev::Token(t), left - 1))
            .sum()
    }
    for vocab in [2usize, 3] {
        for t_max in [3usize, 4] {
            let model = PolicyModel::random_init(vocab, 1, t_max, RngStream::from_seed(7)).unwrap();
            let stop = model.stop_token();
            // All stop-terminated sequences up to t_max, via non-stop prefixes.
            let mut mass = 0.0;
            let mut prefixes: Vec<Vec<usize>> = vec![vec![]];
            for _ in 0..t_max {
                let mut next = Vec::new();
                for prefix in &prefixes {
                    let mut full = prefix.clone();
                    full.push(stop);
                    let y = TokenSeq::new(full).unwrap();
                    mass += model.log_prob(0, &y).unwrap().exp();
                    if prefix.len() + 1 < t_max {
                        for t in 0..stop {
                            let mut longer = prefix.clone();
                            longer.push(t);
                            next.push(longer);
                        }
                    }
                }
                prefixes = next;
            }
            let residual = prob_no_stop(&model, 0, Prev::Bos, t_max);
            if mass > 1.0 + 1e-12 {
                return Err(format!("vocab {vocab}, t_max {t_max}: mass {mass} > 1"));
            }
            let defect = (mass + residual - 1.0).abs();
            if defect > 1e-12 {
                return Err(format!(
                    "vocab {vocab}, t_max {t_max}: partition defect {defect:.3e}"
                ));
            }
        }
    }
    Ok("stop-terminated mass plus no-stop residual is 1 to 1e-12".into())
}

pub fn log_prob_gradient_fd() -> CheckResult {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let model = PolicyModel::random_init(4, 2, 6, RngStream::from_seed(seed)).unwrap();
        let mut rng = RngStream::from_seed(900 + seed).rng();
        let y = random_sequence(&mut rng, 4, 5);
        let ctx = (seed % 2) as usize;
        let analytic = model.grad_log_prob(ctx, &y).unwrap();
        let numeric = fd_gradient(&model, &|m| m.log_prob(ctx, &y).unwrap());
        let err = max_rel_err(analytic.as_slice(), &numeric);
        worst = worst.max(err);
        if err > 1e-6 {
            return Err(format!("seed {seed}, y {y}: relative error {err:.3e}"));
        }
    }
    Ok(format!("20 cases, worst relative error {worst:.3e}"))
}

/// Gradient fidelity over the full configuration grid: links x length
/// normalization x mixing x margin x SFT weight x dispersion.
pub fn unified_loss_gradient_fd() -> CheckResult {
    let links = [
        LinkFunction::Logistic,
        LinkFunction::Hinge { margin: 1.0 },
        LinkFunction::Square,
    ];
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let mut case = 0u64;
    for link in links {
        for length_norm in [false, true] {
            for alpha in [0.0, 0.25, 1.0] {
                for gamma in [0.0, 0.1] {
                    for sft_weight in [0.0, 0.1] {
                        for use_dispersion in [false, true] {
                            case += 1;
                            let cfg = RainbowConfig {
                                beta: 1.5,
                                alpha,
                                gamma,
                                length_norm,
                                sft_weight,
                                link,
                                use_dispersion,
                                ..RainbowConfig::default()
                            };
                            let (policy, reference, pairs) = random_batch(3000 + case, 3);
                            let phi: Vec<f64> = if use_dispersion {
                                pairs
                                    .iter()
                                    .map(|p| {
                                        dispersion(&reference, p, &DispersionConfig::default())
                                    })
                                    .collect()
                            } else {
                                vec![1.0; pairs.len()]
                            };
                            let report = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
                                .map_err(|e| e.to_string())?;
                            // Central differences cannot straddle the hinge kink.
                            if matches!(link, LinkFunction::Hinge { .. })
                                && report
                                    .per_pair_inner
                                    .iter()
                                    .any(|&x| (x - 1.0).abs() < 1e-3)
                            {
                                continue;
                            }
                            let numeric = fd_gradient(&policy, &|m| {
                                rainbow_loss(m, &reference, &pairs, &cfg, &phi)
                                    .unwrap()
                                    .loss
                            });
                            let err = max_rel_err(report.gradient.as_slice(), &numeric);
                            worst = worst.max(err);
                            if err > 1e-6 {
                                return Err(format!(
                                    "config {cfg:?}: gradient error {err:.3e} > 1e-6"
                                ));
                            }
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    if checked < 100 {
        return Err(format!("only {checked} configurations exercised"));
    }
    Ok(format!(
        "{checked} configurations, worst gradient error {worst:.3e}"
    ))
}

pub fn specialization_equalities() -> CheckResult {
    const TOL: f64 = 1e-12;
    for seed in 0..50u64 {
        // DPO: logistic link, full reference, no margin, no normalization.
        let (policy, reference, pairs) = random_batch(seed, 3);
        let phi = vec![1.0; pairs.len()];
        let cfg = RainbowConfig {
            beta: 0.7,
            alpha: 1.0,
            gamma: 0.0,
            length_norm: false,
            sft_weight: 0.0,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
            .map_err(|e| e.to_string())?
            .loss;
        let oracle = pairs
            .iter()
            .map(|p| {
                let margin = 0.7 * (lp(&policy, p, true) - lp(&reference, p, true))
                    - 0.7 * (lp(&policy, p, false) - lp(&reference, p, false));
                -log_sigmoid(margin)
            })
            .sum::<f64>()
            / pairs.len() as f64;
        ensure_close("dpo-equivalence", ours, oracle, TOL)?;

        // Length-normalized DPO; gamma is inert at alpha = 1.
        let cfg = RainbowConfig {
            beta: 2.5,
            alpha: 1.0,
            gamma: 0.4,
            length_norm: true,
            sft_weight: 0.0,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
            .map_err(|e| e.to_string())?
            .loss;
        let oracle = pairs
            .iter()
            .map(|p| {
                let w = (lp(&policy, p, true) - lp(&reference, p, true)) / p.yw.len() as f64;
                let l = (lp(&policy, p, false) - lp(&reference, p, false)) / p.yl.len() as f64;
                -log_sigmoid(2.5 * (w - l))
            })
            .sum::<f64>()
            / pairs.len() as f64;
        ensure_close("ln-dpo-equivalence", ours, oracle, TOL)?;

        // Reference-free with margin and normalization.
        let cfg = RainbowConfig {
            beta: 10.0,
            alpha: 0.0,
            gamma: 0.1,
            length_norm: true,
            sft_weight: 0.0,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
            .map_err(|e| e.to_string())?
            .loss;
        let oracle = pairs
            .iter()
            .map(|p| {
                let arg = 10.0 / p.yw.len() as f64 * lp(&policy, p, true)
                    - 10.0 / p.yl.len() as f64 * lp(&policy, p, false)
                    - 0.1;
                -log_sigmoid(arg)
            })
            .sum::<f64>()
            / pairs.len() as f64;
        ensure_close("simpo-equivalence", ours, oracle, TOL)?;

        // Square link on implicit rewards.
        let cfg = RainbowConfig {
            beta: 0.4,
            alpha: 1.0,
            gamma: 0.0,
            length_norm: false,
            sft_weight: 0.0,
            link: LinkFunction::Square,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
            .map_err(|e| e.to_string())?
            .loss;
        let oracle = pairs
            .iter()
            .map(|p| {
                let margin = 0.4 * (lp(&policy, p, true) - lp(&reference, p, true))
                    - 0.4 * (lp(&policy, p, false) - lp(&reference, p, false));
                (margin - 0.5) * (margin - 0.5)
            })
            .sum::<f64>()
            / pairs.len() as f64;
        ensure_close("ipo-equivalence", ours, oracle, TOL)?;

        // DPO with an explicit margin, expressed through constant pair
        // offsets (the mixing form ties gamma to 1 - alpha).
        let mut offset_pairs = pairs.clone();
        for p in &mut offset_pairs {
            p.offset = Some(0.25);
        }
        let cfg = RainbowConfig {
            beta: 0.9,
            alpha: 1.0,
            gamma: 0.0,
            length_norm: false,
            sft_weight: 0.0,
            use_pair_offset: true,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = rainbow_loss(&policy, &reference, &offset_pairs, &cfg, &phi)
            .map_err(|e| e.to_string())?
            .loss;
        let oracle = offset_pairs
            .iter()
            .map(|p| {
                let margin = 0.9 * (lp(&policy, p, true) - lp(&reference, p, true))
                    - 0.9 * (lp(&policy, p, false) - lp(&reference, p, false));
                -log_sigmoid(margin - 0.25)
            })
            .sum::<f64>()
            / pairs.len() as f64;
        ensure_close("margin-dpo-equivalence", ours, oracle, TOL)?;

        // Reference-free logistic plus normalized SFT regularization.
        let cfg = RainbowConfig {
            beta: 1.3,
            alpha: 0.0,
            gamma: 0.0,
            length_norm: false,
            sft_weight: 1.0,
            sft_normalized: true,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
            .map_err(|e| e.to_string())?
            .loss;
        let oracle = pairs
            .iter()
            .map(|p| {
                let sft = -lp(&policy, p, true) / p.yw.len() as f64;
                sft - log_sigmoid(1.3 * lp(&policy, p, true) - 1.3 * lp(&policy, p, false))
            })
            .sum::<f64>()
            / pairs.len() as f64;
        ensure_close("cpo-equivalence", ours, oracle, TOL)?;

        // Hinge link on implicit rewards.
        let cfg = RainbowConfig {
            beta: 0.6,
            alpha: 1.0,
            gamma: 0.0,
            length_norm: false,
            sft_weight: 0.0,
            link: LinkFunction::Hinge { margin: 1.0 },
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
            .map_err(|e| e.to_string())?
            .loss;
        let oracle = pairs
            .iter()
            .map(|p| {
                let margin = 0.6 * (lp(&policy, p, true) - lp(&reference, p, true))
                    - 0.6 * (lp(&policy, p, false) - lp(&reference, p, false));
                (1.0 - margin).max(0.0)
            })
            .sum::<f64>()
            / pairs.len() as f64;
        ensure_close("hinge-equivalence", ours, oracle, TOL)?;
    }
    Ok("7 specializations match their oracles on 50 batches each (1e-12)".into())
}

pub fn mixing_affinity() -> CheckResult {
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let (policy, reference, pairs) = random_batch(40_000 + seed, 1);
        let pair = &pairs[0];
        let phi = 0.25 + (seed % 5) as f64 / 2.0;
        let at = |alpha: f64| {
            let cfg = RainbowConfig {
                alpha,
                gamma: 0.2,
                length_norm: seed % 2 == 0,
                use_dispersion: false,
                ..RainbowConfig::default()
            };
            inner_argument(&policy, &reference, pair, &cfg, phi).unwrap()
        };
        let residual = (at(0.0) + at(1.0) - 2.0 * at(0.5)).abs();
        worst = worst.max(residual);
        if residual > 1e-12 {
            return Err(format!(
                "seed {seed}: three-point collinearity residual {residual:.3e}"
            ));
        }
    }
    Ok(format!("1000 instances, worst residual {worst:.3e}"))
}

pub fn odds_ratio_bound() -> CheckResult {
    let mut rng = RngStream::from_seed(515151).rng();
    for i in 0..10_000 {
        let p_l: f64 = rng.random_range(0.02..0.90);
        let delta: f64 = rng.random_range(0.0..(0.98f64 / p_l).ln());
        let p_w = p_l * delta.exp();
        let (po, bound) = orpo_po_bound(p_w, p_l).map_err(|e| e.to_string())?;
        if po > bound {
            return Err(format!(
                "violation {i}: po {po} > bound {bound} at (p_w, p_l) = ({p_w}, {p_l})"
            ));
        }
    }

    let p_l = 0.4;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..12 {
        let delta = 10f64.powf(-0.5 - 0.25 * k as f64);
        let (po, bound) = orpo_po_bound(p_l * delta.exp(), p_l).map_err(|e| e.to_string())?;
        xs.push(delta.ln());
        ys.push((bound - po).ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    if !(1.8..=2.2).contains(&slope) {
        return Err(format!("gap exponent {slope:.3} outside [1.8, 2.2]"));
    }
    Ok(format!(
        "10^4 samples, zero violations; gap exponent {slope:.3}"
    ))
}

pub fn rejection_sampling_statistics() -> CheckResult {
    // Acceptance frequencies against the closed form.
    let trials = 10_000usize;
    for (ti, temperature) in [0.05, 0.2, 1.0].into_iter().enumerate() {
        for (pi, percentile) in [0.25, 0.5, 0.75, 1.0].into_iter().enumerate() {
            let p = acceptance_probability(percentile, temperature);
            let mut rng = RngStream::from_seed(7000 + (ti * 16 + pi) as u64).rng();
            let hits = (0..trials)
                .filter(|_| accepts(percentile, temperature, rng.random::<f64>()))
                .count();
            if percentile == 1.0 {
                if hits != trials {
                    return Err(format!(
                        "top percentile accepted {hits}/{trials} at tau {temperature}"
                    ));
                }
                continue;
            }
            let freq = hits as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            if (freq - p).abs() > 3.0 * sigma {
                return Err(format!(
                    "tau {temperature}, P {percentile}: frequency {freq} vs {p} (3 sigma {:.4})",
                    3.0 * sigma
                ));
            }
        }
    }

    // tau -> infinity: the full-pool accept set reproduces best/worst-of-N.
    let policy = PolicyModel::random_init(5, 2, 8, RngStream::from_seed(606)).unwrap();
    let reward = |ctx: usize, y: &TokenSeq| {
        y.tokens()
            .iter()
            .map(|&t| (t * (ctx + 2)) as f64)
            .sum::<f64>()
            - 0.3 * y.len() as f64
    };
    let n = 8usize;
    let rs_cfg = SamplerConfig {
        pool_size: n,
        accept_size: n,
        temperature: 1e9,
        ..SamplerConfig::default()
    };
    let bw_cfg = SamplerConfig {
        k: n,
        ..SamplerConfig::default()
    };
    let root = RngStream::from_seed(616);
    for t in 0..1000u64 {
        let stream = root.substream(t);
        let ctx = (t % 2) as usize;
        let (rs_pair, trace) = rs_plus_with_trace(&policy, &reward, ctx, &rs_cfg, stream)
            .map_err(|e| e.to_string())?;
        let bw_pair =
            best_worst_of_k(&policy, &reward, ctx, &bw_cfg, stream).map_err(|e| e.to_string())?;
        if trace.backfilled != 0 || trace.attempts != n {
            return Err(format!(
                "seed {t}: tau=1e9 run used {} attempts, {} backfills",
                trace.attempts, trace.backfilled
            ));
        }
        if rs_pair != bw_pair {
            return Err(format!(
                "seed {t}: tau=1e9 pair differs from best/worst-of-{n}"
            ));
        }
    }
    Ok("acceptance frequencies within 3 sigma; tau=1e9 equals best/worst-of-N".into())
}

pub fn dispersion_range() -> CheckResult {
    let reference = PolicyModel::random_init(6, 2, 8, RngStream::from_seed(11)).unwrap();
    let uniform = PolicyModel::uniform(6, 2, 8).unwrap();
    let cfg = DispersionConfig::default();
    let mut rng = RngStream::from_seed(12).rng();
    for i in 0..200 {
        let ctx = rng.random_range(0..2);
        let pair = PreferencePair::new(
            ctx,
            random_sequence(&mut rng, 6, 7),
            random_sequence(&mut rng, 6, 7),
        );
        let phi = dispersion(&reference, &pair, &cfg);
        if !(phi.is_finite() && phi >= 0.0) {
            return Err(format!("case {i}: phi = {phi} for pair {pair:?}"));
        }
        let flat = dispersion(&uniform, &pair, &cfg);
        if flat != 0.0 {
            return Err(format!("uniform reference gave phi = {flat}"));
        }
        let cap = -cfg.ratio_floor.ln();
        if phi > cap + 1e-12 {
            return Err(format!("phi {phi} exceeds the floor cap {cap}"));
        }
    }
    Ok("phi finite, non-negative, capped by the ratio floor; 0 at uniform".into())
}

pub fn percentile_ranking() -> CheckResult {
    if percentiles(&[0.9, 0.5, 0.1, 0.3]) != vec![1.0, 0.75, 0.25, 0.5] {
        return Err("rank order broken on [0.9, 0.5, 0.1, 0.3]".into());
    }
    if percentiles(&[1.0, 1.0, 1.0]) != vec![1.0 / 3.0, 2.0 / 3.0, 1.0] {
        return Err("tie rule broken: earlier index must rank lower".into());
    }
    if percentiles(&[42.0]) != vec![1.0] {
        return Err("singleton percentile must be 1".into());
    }
    let mut rng = RngStream::from_seed(99).rng();
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let pct = percentiles(&rewards);
        let mut sorted = pct.clone();
        sorted.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (1..=n).map(|r| r as f64 / n as f64).collect();
        if sorted != expected {
            return Err(format!(
                "percentiles of {rewards:?} are not a permutation of ranks"
            ));
        }
    }
    Ok("rank/N percentiles with index tie-breaking".into())
}

pub fn pipeline_determinism() -> CheckResult {
    let reference = PolicyModel::random_init(6, 3, 8, RngStream::from_seed(21)).unwrap();
    let reward = SyntheticReward::generate(6, 3, 0.05, 1.0, 22).map_err(|e| e.to_string())?;
    let make = || {
        generate_dataset(
            &reference,
            &reward,
            30,
            SampleMethod::RsPlus,
            &SamplerConfig {
                pool_size: 8,
                accept_size: 4,
                ..SamplerConfig::default()
            },
            RngStream::new(23, rainbow_core::synth::DATA_STREAM),
        )
    };
    let a = make().map_err(|e| e.to_string())?;
    let b = make().map_err(|e| e.to_string())?;
    if a != b {
        return Err("dataset generation is not deterministic".into());
    }
    let mut buf_a = Vec::new();
    let mut buf_b = Vec::new();
    a.save(&mut buf_a).map_err(|e| e.to_string())?;
    b.save(&mut buf_b).map_err(|e| e.to_string())?;
    if buf_a != buf_b {
        return Err("dataset serialization is not byte-stable".into());
    }
    Ok("dataset pipeline bit-deterministic per seed".into())
}
