//! Unlabeled training sets drawn from fresh random-beam episodes.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::error::Result;
use crate::harness::episode::{run_episode, EpisodeRngs, Method};
use crate::model_file::encode_dataset;
use crate::nn::window::{HistoryWindow, TrainingExample};
use crate::rng::Purpose;

/// Example `i` comes from its own episode: a slot offset is drawn uniformly
/// from the positions that fit a full window plus target inside
/// `n_slots`, the episode runs to the target slot, and the window covers
/// the `τ` slots just before it.
pub fn generate_example(config: &SimConfig, seed: u64, index: u64) -> Result<TrainingExample> {
    let tau = config.history_len;
    let mut rngs = EpisodeRngs::new(seed, Purpose::Dataset, index);
    let span = config.n_slots.saturating_sub(tau + 1) + 1;
    let offset = (crate::rng::uniform01(&mut rngs.beams) * span as f64) as usize;
    let cfg = SimConfig {
        n_slots: offset + tau + 1,
        ..config.clone()
    };
    let trace = run_episode(&cfg, Method::Random, &mut rngs)?;
    let window = &trace.slots[offset..offset + tau];
    let target = &trace.slots[offset + tau];
    Ok(TrainingExample {
        history: HistoryWindow {
            slots: window.iter().map(|s| s.est_channels.clone()).collect(),
            est_thetas: window.iter().map(|s| s.est_thetas.clone()).collect(),
            est_dists: window.iter().map(|s| s.est_dists.clone()).collect(),
        },
        true_channels: crate::harness::episode::channel_matrix(&target.states, config)?,
        true_thetas: target.states.iter().map(|s| s.theta).collect(),
        true_dists: target.states.iter().map(|s| s.dist).collect(),
    })
}

pub fn generate_dataset(config: &SimConfig, n_examples: usize, seed: u64) -> Result<Vec<TrainingExample>> {
    (0..n_examples as u64)
        .into_par_iter()
        .map(|i| generate_example(config, seed, i))
        .collect()
}

/// SHA-256 of the dataset's container encoding, as lowercase hex.
pub fn dataset_hash(data: &[TrainingExample], config: &SimConfig) -> String {
    let digest = Sha256::digest(encode_dataset(data, config).to_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
