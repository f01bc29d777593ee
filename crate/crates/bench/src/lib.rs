//! Shared fixtures for the benchmark targets.

use rainbow_core::synth::DATA_STREAM;
use rainbow_core::{
    generate_dataset, PolicyModel, PreferenceDataset, RngStream, SampleMethod, SamplerConfig,
    SyntheticReward,
};

pub const VOCAB: usize = 12;
pub const CONTEXTS: usize = 8;
pub const T_MAX: usize = 16;

pub fn reference() -> PolicyModel {
    PolicyModel::random_init(VOCAB, CONTEXTS, T_MAX, RngStream::from_seed(1)).unwrap()
}

pub fn policy() -> PolicyModel {
    PolicyModel::random_init(VOCAB, CONTEXTS, T_MAX, RngStream::from_seed(2)).unwrap()
}

pub fn reward() -> SyntheticReward {
    SyntheticReward::generate(VOCAB, CONTEXTS, 0.05, 1.0, 3).unwrap()
}

pub fn dataset(pairs: usize) -> PreferenceDataset {
    generate_dataset(
        &reference(),
        &reward(),
        pairs,
        SampleMethod::BestWorstOfK,
        &SamplerConfig::default(),
        RngStream::new(4, DATA_STREAM),
    )
    .unwrap()
}
