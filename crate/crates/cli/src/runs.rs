//! The experiment pipelines behind the subcommands: world assembly, dataset
//! generation, training with per-epoch evaluation, and standalone
//! evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rainbow_core::synth::{DATA_STREAM, EVAL_STREAM, INIT_STREAM};
use rainbow_core::{
    evaluate, generate_dataset, train_with_hook, EvalReport, PolicyModel, PreferenceDataset,
    Provenance, RngStream, SyntheticReward,
};

use crate::config::{bytes_hash, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::results::{write_rows, write_trace, RunRow};

/// The frozen pieces every pipeline shares: the reference policy (which also
/// serves as the training initialization) and the latent reward.
pub struct World {
    pub reference: PolicyModel,
    pub reward: SyntheticReward,
}

pub fn build_world(cfg: &ExperimentConfig) -> Result<World> {
    let w = &cfg.world;
    let reference = PolicyModel::random_init(
        w.vocab,
        w.contexts,
        w.t_max,
        RngStream::new(w.seed, INIT_STREAM),
    )?;
    let reward =
        SyntheticReward::generate(w.vocab, w.contexts, w.length_bias, w.score_std, w.seed)?;
    Ok(World { reference, reward })
}

/// Sidecar metadata written next to every generated dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub provenance: Provenance,
    pub prompts: usize,
    pub degenerate_pairs: usize,
    pub reward_hash: String,
    pub config_hash: String,
}

pub fn meta_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    dataset.with_file_name(name)
}

pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetMeta> {
    cfg.validate()?;
    let world = build_world(cfg)?;
    let dataset = generate_dataset(
        &world.reference,
        &world.reward,
        cfg.data.prompts,
        cfg.data.method,
        &cfg.sampler,
        RngStream::new(cfg.world.seed, DATA_STREAM),
    )?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    dataset
        .save_to_path(out)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", out.display())))?;

    let reward_hash = bytes_hash(
        serde_json::to_string(&world.reward)
            .expect("reward")
            .as_bytes(),
    );
    let meta = DatasetMeta {
        seed: cfg.world.seed,
        provenance: dataset.provenance,
        prompts: cfg.data.prompts,
        degenerate_pairs: dataset.degenerate_count(),
        reward_hash,
        config_hash: cfg.content_hash(&["gen-data"]),
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    std::fs::write(meta_path(out), text)?;
    Ok(meta)
}

fn check_dims(cfg: &ExperimentConfig, dataset: &PreferenceDataset) -> Result<()> {
    if dataset.vocab != cfg.world.vocab || dataset.contexts != cfg.world.contexts {
        return Err(CliError::config(format!(
            "dataset world ({}, {}) does not match the configured world ({}, {})",
            dataset.vocab, dataset.contexts, cfg.world.vocab, cfg.world.contexts
        )));
    }
    Ok(())
}

pub struct TrainOutcome {
    pub policy: PolicyModel,
    pub rows: Vec<RunRow>,
    pub final_eval: EvalReport,
}

/// Train on a dataset file: per-epoch evaluation rows, a loss trace, rolling
/// checkpoints, and the final policy at `out`.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    dataset_path: &Path,
    out: &Path,
    results_dir: &Path,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dataset_bytes = std::fs::read(dataset_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", dataset_path.display())))?;
    let dataset = PreferenceDataset::load(&dataset_bytes[..])?;
    check_dims(cfg, &dataset)?;
    let world = build_world(cfg)?;
    let (train_split, holdout) = dataset.split_holdout(cfg.eval.holdout_fraction)?;

    let config_hash = cfg.content_hash(&["train", &bytes_hash(&dataset_bytes)]);
    let eval_root = RngStream::new(cfg.world.seed, EVAL_STREAM);
    std::fs::create_dir_all(results_dir)?;

    let mut epoch_reports: Vec<EvalReport> = Vec::with_capacity(cfg.train.epochs);
    let (policy, trace) = train_with_hook(
        &world.reference,
        &world.reference,
        &train_split,
        &cfg.loss,
        &cfg.dispersion,
        &cfg.train,
        |epoch, policy| {
            let report = evaluate(
                policy,
                &world.reference,
                &world.reward,
                &holdout,
                cfg.eval.n_eval,
                eval_root.substream(epoch as u64),
            )?;
            epoch_reports.push(report);
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                policy.save_to_path(
                    results_dir.join(format!("checkpoint_epoch_{}.bin", epoch + 1)),
                )?;
            }
            Ok(())
        },
    )?;

    let batches_per_epoch = trace.len() / cfg.train.epochs;
    let mut rows = Vec::with_capacity(epoch_reports.len());
    for (epoch, report) in epoch_reports.iter().enumerate() {
        let chunk = &trace[epoch * batches_per_epoch..(epoch + 1) * batches_per_epoch];
        let mean_loss = chunk.iter().sum::<f64>() / chunk.len() as f64;
        // The epoch joins the hash so equal hashes always mean bit-equal
        // metrics, even across rows of one run.
        let row_hash = cfg.content_hash(&[&config_hash, &format!("epoch-{}", epoch + 1)]);
        let mut row = RunRow::new("train", "train", cfg.world.seed, row_hash).with_eval(report);
        row.epoch = Some(epoch + 1);
        row.train_loss = Some(mean_loss);
        rows.push(row);
    }
    write_rows(results_dir, "train_results", &rows)?;
    write_trace(results_dir, "loss_trace", &trace)?;

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    policy.save_to_path(out)?;

    let final_eval = epoch_reports.last().expect("at least one epoch").clone();
    Ok(TrainOutcome {
        policy,
        rows,
        final_eval,
    })
}

/// Evaluate a checkpoint (or the fresh reference when none is given)
/// against the reference policy, using the dataset file as the held-out
/// pair set.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    dataset_path: &Path,
    checkpoint: Option<&Path>,
    results_dir: &Path,
) -> Result<EvalReport> {
    cfg.validate()?;
    let dataset_bytes = std::fs::read(dataset_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", dataset_path.display())))?;
    let dataset = PreferenceDataset::load(&dataset_bytes[..])?;
    check_dims(cfg, &dataset)?;
    let world = build_world(cfg)?;
    let (policy, policy_hash) = match checkpoint {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            (PolicyModel::load(&bytes[..])?, bytes_hash(&bytes))
        }
        None => (world.reference.clone(), "reference".to_string()),
    };
    if !policy.same_shape(&world.reference) {
        return Err(CliError::config(
            "checkpoint shape does not match the configured world",
        ));
    }
    let report = evaluate(
        &policy,
        &world.reference,
        &world.reward,
        &dataset,
        cfg.eval.n_eval,
        RngStream::new(cfg.world.seed, EVAL_STREAM),
    )?;
    let label = checkpoint
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "reference".to_string());
    let config_hash = cfg.content_hash(&["eval", &bytes_hash(&dataset_bytes), &policy_hash]);
    let row = RunRow::new("eval", &label, cfg.world.seed, config_hash).with_eval(&report);
    write_rows(results_dir, "eval_results", &[row])?;
    Ok(report)
}

/// The self-contained pipeline used by the ablation grid: generate, split,
/// train, evaluate. Everything derives from the config, so equal configs
/// give bit-equal outcomes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(EvalReport, String)> {
    cfg.validate()?;
    let world = build_world(cfg)?;
    let dataset = generate_dataset(
        &world.reference,
        &world.reward,
        cfg.data.prompts,
        cfg.data.method,
        &cfg.sampler,
        RngStream::new(cfg.world.seed, DATA_STREAM),
    )?;
    let (train_split, holdout) = dataset.split_holdout(cfg.eval.holdout_fraction)?;
    let (policy, _trace) = rainbow_core::train(
        &world.reference,
        &world.reference,
        &train_split,
        &cfg.loss,
        &cfg.dispersion,
        &cfg.train,
    )?;
    let report = evaluate(
        &policy,
        &world.reference,
        &world.reward,
        &holdout,
        cfg.eval.n_eval,
        RngStream::new(cfg.world.seed, EVAL_STREAM).substream(cfg.train.epochs as u64 - 1),
    )?;
    let hash = cfg.content_hash(&["experiment"]);
    Ok((report, hash))
}
