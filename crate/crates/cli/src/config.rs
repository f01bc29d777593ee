//! The experiment configuration file: one TOML document nesting the world,
//! data, sampler, loss, dispersion, training and evaluation sections.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rainbow_core::{DispersionConfig, RainbowConfig, SampleMethod, SamplerConfig, TrainConfig};

use crate::error::{CliError, Result};

/// The synthetic token world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Vocabulary size, including the stop token.
    pub vocab: usize,
    pub contexts: usize,
    pub t_max: usize,
    /// Linear length bias of the latent reward.
    pub length_bias: f64,
    /// Scale of the latent per-token scores.
    pub score_std: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            vocab: 12,
            contexts: 8,
            t_max: 16,
            length_bias: 0.05,
            score_std: 1.0,
            seed: 41,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(CliError::config("world.vocab must be >= 2"));
        }
        if self.contexts == 0 || self.t_max == 0 {
            return Err(CliError::config(
                "world.contexts and world.t_max must be >= 1",
            ));
        }
        if !self.length_bias.is_finite() || !(self.score_std.is_finite() && self.score_std > 0.0) {
            return Err(CliError::config(
                "world.length_bias must be finite, world.score_std positive",
            ));
        }
        Ok(())
    }
}

/// Dataset construction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub prompts: usize,
    pub method: SampleMethod,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            prompts: 500,
            method: SampleMethod::BestWorstOfK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Head-to-head prompt draws per evaluation.
    pub n_eval: usize,
    /// Fraction of the dataset tail held out for pairwise accuracy.
    pub holdout_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_eval: 2000,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub data: DataConfig,
    pub sampler: SamplerConfig,
    pub loss: RainbowConfig,
    pub dispersion: DispersionConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Emit an intermediate checkpoint every this many epochs (0 = final
    /// checkpoint only).
    pub checkpoint_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            data: DataConfig::default(),
            sampler: SamplerConfig::default(),
            loss: RainbowConfig::default(),
            dispersion: DispersionConfig::default(),
            // The stock learning rate targets full-scale models; the toy
            // policy wants the calibrated value, and a ratio warm-up so
            // short runs keep a valid schedule.
            train: TrainConfig {
                lr: 4e-2,
                warmup: 0.1,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
            checkpoint_every: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.data.prompts == 0 {
            return Err(CliError::config("data.prompts must be >= 1"));
        }
        if self.eval.n_eval == 0 {
            return Err(CliError::config("eval.n_eval must be >= 1"));
        }
        if !(self.eval.holdout_fraction > 0.0 && self.eval.holdout_fraction < 1.0) {
            return Err(CliError::config("eval.holdout_fraction must lie in (0, 1)"));
        }
        self.sampler.validate()?;
        self.loss.validate()?;
        self.dispersion.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            CliError::config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.as_ref().display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::runtime(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Override every seed from the command line.
    pub fn override_seed(&mut self, seed: u64) {
        self.world.seed = seed;
        self.train.seed = seed;
    }

    /// Hash of the canonical config serialization plus any extra
    /// identifying parts (e.g. the dataset content hash); rows with equal
    /// hashes are guaranteed bit-equal metrics.
    pub fn content_hash(&self, extra: &[&str]) -> String {
        let mut hasher = Sha256::new();
        hasher.update(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        );
        for part in extra {
            hasher.update([0u8]);
            hasher.update(part.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Hash of arbitrary bytes (dataset files, reward tables).
pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
