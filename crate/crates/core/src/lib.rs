//! A desk-scale laboratory for preference-optimization objectives.
//!
//! The crate provides a family of configurable pairwise losses — length
//! normalization, link functions, margins, reference-policy mixing,
//! contextual entropy scaling, per-pair offsets and SFT regularization in
//! one objective — exercised on an exactly differentiable toy policy
//! (a context-conditioned first-order softmax sequence model) against
//! synthetic additive rewards. Everything is seeded and bit-reproducible:
//! dataset construction, rejection sampling, training and evaluation.

pub mod dispersion;
pub mod error;
pub mod losses;
pub mod policy;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod trainer;
pub mod types;

pub use dispersion::{dispersion, DispersionConfig};
pub use error::{Error, Result};
pub use losses::{
    implicit_reward, inner_argument, normalized_likelihood, normalized_loglik, orpo_loss,
    orpo_po_bound, rainbow_loss, LinkFunction, LossReport, RainbowConfig,
};
pub use policy::{GradientVector, PolicyModel, Prev};
pub use rng::RngStream;
pub use sampler::{
    acceptance_probability, accepts, best_worst_of_k, percentiles, rs_plus, rs_plus_with_trace,
    Reward, RsTrace, SampleMethod, SamplerConfig,
};
pub use synth::{bt_preference_prob, evaluate, generate_dataset, EvalReport, SyntheticReward};
pub use trainer::{lr_at_step, train, train_with_hook, OptimizerKind, TrainConfig};
pub use types::{PreferenceDataset, PreferencePair, Provenance, TokenSeq};
