//! Independently coded per-objective oracles and finite-difference checks
//! for the unified loss. The oracles below use nothing but `log_prob` and
//! scalar arithmetic, so they cannot share a bug with the loss layer.

mod common;

use common::{finite_difference_grad, max_rel_err, random_pair, small_model};
use rainbow_core::{
    dispersion, inner_argument, orpo_loss, orpo_po_bound, rainbow_loss, DispersionConfig,
    LinkFunction, PolicyModel, PreferencePair, RainbowConfig, RngStream,
};

fn log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn batch(seed: u64, n_pairs: usize) -> (PolicyModel, PolicyModel, Vec<PreferencePair>) {
    let policy = small_model(seed);
    let reference = small_model(seed ^ 0x5a5a);
    let mut rng = RngStream::from_seed(seed.wrapping_mul(31).wrapping_add(7)).rng();
    let pairs = (0..n_pairs)
        .map(|_| random_pair(&mut rng, 4, 2, 6))
        .collect();
    (policy, reference, pairs)
}

// ---------------------------------------------------------------------------
// Per-objective oracles: direct transcriptions of each loss.
// ---------------------------------------------------------------------------

fn lp(model: &PolicyModel, pair: &PreferencePair, winner: bool) -> f64 {
    let y = if winner { &pair.yw } else { &pair.yl };
    model.log_prob(pair.ctx, y).unwrap()
}

fn dpo_oracle(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pairs: &[PreferencePair],
    beta: f64,
) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let margin = beta * (lp(policy, pair, true) - lp(reference, pair, true))
            - beta * (lp(policy, pair, false) - lp(reference, pair, false));
        total += -log_sigmoid(margin);
    }
    total / pairs.len() as f64
}

fn ln_dpo_oracle(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pairs: &[PreferencePair],
    beta: f64,
) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let w = (lp(policy, pair, true) - lp(reference, pair, true)) / pair.yw.len() as f64;
        let l = (lp(policy, pair, false) - lp(reference, pair, false)) / pair.yl.len() as f64;
        total += -log_sigmoid(beta * w - beta * l);
    }
    total / pairs.len() as f64
}

fn simpo_oracle(policy: &PolicyModel, pairs: &[PreferencePair], beta: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let arg = beta / pair.yw.len() as f64 * lp(policy, pair, true)
            - beta / pair.yl.len() as f64 * lp(policy, pair, false)
            - gamma;
        total += -log_sigmoid(arg);
    }
    total / pairs.len() as f64
}

fn ipo_oracle(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pairs: &[PreferencePair],
    beta: f64,
) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let margin = beta * (lp(policy, pair, true) - lp(reference, pair, true))
            - beta * (lp(policy, pair, false) - lp(reference, pair, false));
        total += (margin - 0.5) * (margin - 0.5);
    }
    total / pairs.len() as f64
}

fn dpo_margin_oracle(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pairs: &[PreferencePair],
    beta: f64,
    gamma: f64,
) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let margin = beta * (lp(policy, pair, true) - lp(reference, pair, true))
            - beta * (lp(policy, pair, false) - lp(reference, pair, false));
        total += -log_sigmoid(margin - gamma);
    }
    total / pairs.len() as f64
}

fn cpo_oracle(policy: &PolicyModel, pairs: &[PreferencePair], beta: f64) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let sft = -lp(policy, pair, true) / pair.yw.len() as f64;
        let po = -log_sigmoid(beta * lp(policy, pair, true) - beta * lp(policy, pair, false));
        total += sft + po;
    }
    total / pairs.len() as f64
}

fn slic_hinge_oracle(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pairs: &[PreferencePair],
    beta: f64,
    delta: f64,
) -> f64 {
    let mut total = 0.0;
    for pair in pairs {
        let margin = beta * (lp(policy, pair, true) - lp(reference, pair, true))
            - beta * (lp(policy, pair, false) - lp(reference, pair, false));
        total += (delta - margin).max(0.0);
    }
    total / pairs.len() as f64
}

// ---------------------------------------------------------------------------
// Specialization equalities, 50 random batches per objective.
// ---------------------------------------------------------------------------

const BATCHES: u64 = 50;
const EXACT: f64 = 1e-12;

fn unified(
    policy: &PolicyModel,
    reference: &PolicyModel,
    pairs: &[PreferencePair],
    cfg: &RainbowConfig,
) -> f64 {
    let phi = vec![1.0; pairs.len()];
    rainbow_loss(policy, reference, pairs, cfg, &phi)
        .unwrap()
        .loss
}

#[test]
fn reproduces_dpo() {
    for seed in 0..BATCHES {
        let (policy, reference, pairs) = batch(seed, 3);
        let cfg = RainbowConfig {
            beta: 0.7,
            alpha: 1.0,
            gamma: 0.0,
            length_norm: false,
            sft_weight: 0.0,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = unified(&policy, &reference, &pairs, &cfg);
        let oracle = dpo_oracle(&policy, &reference, &pairs, 0.7);
        assert!(
            (ours - oracle).abs() <= EXACT,
            "seed {seed}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn reproduces_ln_dpo() {
    for seed in 0..BATCHES {
        let (policy, reference, pairs) = batch(seed + 100, 3);
        // gamma is free: the mixing weight 1 removes it.
        let cfg = RainbowConfig {
            beta: 2.5,
            alpha: 1.0,
            gamma: 0.37,
            length_norm: true,
            sft_weight: 0.0,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = unified(&policy, &reference, &pairs, &cfg);
        let oracle = ln_dpo_oracle(&policy, &reference, &pairs, 2.5);
        assert!(
            (ours - oracle).abs() <= EXACT,
            "seed {seed}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn reproduces_simpo() {
    for seed in 0..BATCHES {
        let (policy, reference, pairs) = batch(seed + 200, 3);
        let cfg = RainbowConfig {
            beta: 10.0,
            alpha: 0.0,
            gamma: 0.1,
            length_norm: true,
            sft_weight: 0.0,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let ours = unified(&policy, &reference, &pairs, &cfg);
        let oracle = simpo_oracle(&policy, &pairs, 10.0, 0.1);
        assert!(
            (ours - oracle).abs() <= EXACT,
            "seed {seed}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn reproduces_ipo() {
    for seed in 0..BATCHES {
        let (policy, reference, pairs) = batch(seed + 300, 3);
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
        let ours = unified(&policy, &reference, &pairs, &cfg);
        let oracle = ipo_oracle(&policy, &reference, &pairs, 0.4);
        assert!(
            (ours - oracle).abs() <= EXACT,
            "seed {seed}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn reproduces_dpo_with_margin() {
    // The mixing form ties the margin to (1 - alpha), so alpha = 1 cannot
    // carry gamma; a constant per-pair offset supplies the same margin.
    let gamma = 0.25;
    for seed in 0..BATCHES {
        let (policy, reference, mut pairs) = batch(seed + 400, 3);
        for pair in &mut pairs {
            pair.offset = Some(gamma);
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
        let ours = unified(&policy, &reference, &pairs, &cfg);
        let oracle = dpo_margin_oracle(&policy, &reference, &pairs, 0.9, gamma);
        assert!(
            (ours - oracle).abs() <= EXACT,
            "seed {seed}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn reproduces_cpo_shape() {
    for seed in 0..BATCHES {
        let (policy, reference, pairs) = batch(seed + 500, 3);
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
        let ours = unified(&policy, &reference, &pairs, &cfg);
        let oracle = cpo_oracle(&policy, &pairs, 1.3);
        assert!(
            (ours - oracle).abs() <= EXACT,
            "seed {seed}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn reproduces_slic_hinge() {
    for seed in 0..BATCHES {
        let (policy, reference, pairs) = batch(seed + 600, 3);
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
        let ours = unified(&policy, &reference, &pairs, &cfg);
        let oracle = slic_hinge_oracle(&policy, &reference, &pairs, 0.6, 1.0);
        assert!(
            (ours - oracle).abs() <= EXACT,
            "seed {seed}: {ours} vs {oracle}"
        );
    }
}

// ---------------------------------------------------------------------------
// Gradient fidelity across the whole configuration space.
// ---------------------------------------------------------------------------

#[test]
fn unified_gradients_match_finite_differences() {
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
                            let (policy, reference, pairs) = batch(9000 + case, 3);
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
                            // Finite differences cannot see across the hinge
                            // kink; skip configurations that straddle it.
                            if matches!(link, LinkFunction::Hinge { .. }) {
                                let report =
                                    rainbow_loss(&policy, &reference, &pairs, &cfg, &phi).unwrap();
                                if report
                                    .per_pair_inner
                                    .iter()
                                    .any(|&x| (x - 1.0).abs() < 1e-3)
                                {
                                    continue;
                                }
                            }
                            let analytic = rainbow_loss(&policy, &reference, &pairs, &cfg, &phi)
                                .unwrap()
                                .gradient;
                            let numeric = finite_difference_grad(&policy, |m| {
                                rainbow_loss(m, &reference, &pairs, &cfg, &phi)
                                    .unwrap()
                                    .loss
                            });
                            let err = max_rel_err(analytic.as_slice(), &numeric);
                            worst = worst.max(err);
                            assert!(err <= 1e-6, "config {case} ({cfg:?}): gradient error {err}");
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(checked >= 100, "only {checked} configurations checked");
    println!("unified loss: {checked} configs, worst gradient error {worst:.3e}");
}

#[test]
fn orpo_gradients_match_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..25u64 {
        let (policy, _, pairs) = batch(seed + 700, 3);
        for po_weight in [0.25, 1.0] {
            let analytic = orpo_loss(&policy, &pairs, po_weight).unwrap().gradient;
            let numeric =
                finite_difference_grad(&policy, |m| orpo_loss(m, &pairs, po_weight).unwrap().loss);
            let err = max_rel_err(analytic.as_slice(), &numeric);
            worst = worst.max(err);
            assert!(err <= 1e-6, "seed {seed}, weight {po_weight}: error {err}");
        }
    }
    println!("odds-ratio loss worst gradient error: {worst:.3e}");
}

// ---------------------------------------------------------------------------
// Structural properties.
// ---------------------------------------------------------------------------

#[test]
fn inner_argument_is_affine_in_alpha_everywhere() {
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let (policy, reference, pairs) = batch(seed + 800, 1);
        let pair = &pairs[0];
        let phi = 0.5 + (seed % 7) as f64 / 4.0;
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
        assert!(residual <= 1e-12, "seed {seed}: residual {residual}");
    }
    println!("three-point collinearity worst residual: {worst:.3e}");
}

#[test]
fn one_descent_step_widens_the_margin() {
    for seed in 0..20u64 {
        let (policy, reference, pairs) = batch(seed + 900, 1);
        let pair = &pairs[0];
        if pair.yw == pair.yl {
            continue;
        }
        let cfg = RainbowConfig {
            alpha: 0.25,
            use_dispersion: false,
            ..RainbowConfig::default()
        };
        let report = rainbow_loss(&policy, &reference, &pairs, &cfg, &[1.0]).unwrap();
        let margin = |model: &PolicyModel| {
            let w = model.log_prob(pair.ctx, &pair.yw).unwrap() / pair.yw.len() as f64;
            let l = model.log_prob(pair.ctx, &pair.yl).unwrap() / pair.yl.len() as f64;
            w - l
        };
        let before = margin(&policy);
        let mut stepped = policy.clone();
        for (p, g) in stepped
            .logits_mut()
            .iter_mut()
            .zip(report.gradient.as_slice())
        {
            *p -= 1e-4 * g;
        }
        let after = margin(&stepped);
        assert!(
            after > before,
            "seed {seed}: margin went {before} -> {after}"
        );
    }
}

// ---------------------------------------------------------------------------
// Odds-ratio upper bound: domination and sharpness.
// ---------------------------------------------------------------------------

#[test]
fn orpo_bound_dominates_everywhere() {
    let mut rng = RngStream::from_seed(424242).rng();
    use rand::Rng;
    for i in 0..10_000 {
        let p_l: f64 = rng.random_range(0.02..0.90);
        let max_log_gap = (0.98f64 / p_l).ln();
        let delta: f64 = rng.random_range(0.0..max_log_gap);
        let p_w = p_l * delta.exp();
        let (po, bound) = orpo_po_bound(p_w, p_l).unwrap();
        assert!(
            po <= bound,
            "sample {i}: po {po} > bound {bound} at (p_w, p_l) = ({p_w}, {p_l})"
        );
    }
}

#[test]
fn orpo_bound_gap_is_quadratic_in_delta() {
    // Fit the log-log slope of the gap as delta -> 0 along p_w -> p_l.
    let p_l = 0.4;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..12 {
        let delta = 10f64.powf(-0.5 - 0.25 * k as f64);
        let p_w = p_l * delta.exp();
        let (po, bound) = orpo_po_bound(p_w, p_l).unwrap();
        let gap = bound - po;
        assert!(gap > 0.0);
        xs.push(delta.ln());
        ys.push(gap.ln());
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
    assert!(
        (1.8..=2.2).contains(&slope),
        "gap exponent {slope} outside [1.8, 2.2]"
    );
    println!("odds-ratio bound gap exponent: {slope:.4}");
}
