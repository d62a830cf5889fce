//! Losses, optimizer, schedule and the two training loops.

mod config;
mod data;
mod denoiser;
mod losses;
mod noise_model;
mod optim;

pub use config::TrainConfig;
pub use data::{collect_profiles, crop, simulate_pairs, split_validation, TrainPair};
pub use denoiser::{train_denoiser, DenoiserEpoch, DenoiserTrainer};
pub use losses::{
    adversarial_losses, alignment_losses, lipschitz_penalty, mean_abs_diff, mean_sq_diff, penalty_pairs, total_loss,
    AdversarialLosses, AlignmentLosses,
};
pub use noise_model::{train_noise_model, NoiseEpoch, NoiseModelTrainer};
pub use optim::{cosine_lr, AdamState, ADAM_EPS};

use crate::error::{Error, Result};
use crate::models::{NetworkKind, Record};

/// Optimizer moments as a checkpoint record: `arch = [adam step, epochs done]`,
/// the note names the network they belong to.
fn adam_record(adam: &AdamState, epoch: usize, owner: &str) -> Record {
    Record {
        kind: NetworkKind::AdamMoments,
        arch: vec![adam.step, epoch as u64],
        weights: adam.flatten(),
        note: owner.to_string(),
    }
}

/// Loads the moments recorded for `owner`; returns the epoch counter.
fn restore_adam(adam: &mut AdamState, records: &[Record], owner: &str) -> Result<usize> {
    let rec = records
        .iter()
        .find(|r| r.kind == NetworkKind::AdamMoments && r.note == owner)
        .ok_or_else(|| Error::Architecture(format!("checkpoint holds no optimizer state for the {owner}")))?;
    let &[step, epoch] = rec.arch.as_slice() else {
        return Err(Error::Architecture(format!("bad optimizer record header {:?}", rec.arch)));
    };
    adam.load_flat(step, &rec.weights)?;
    Ok(epoch as usize)
}
