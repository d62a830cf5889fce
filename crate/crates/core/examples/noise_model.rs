//! Trains the separated noise model briefly, then synthesizes a noisy patch
//! for a clean scene and compares it with the oracle sensor.

use lownoise::metrics::akld;
use lownoise::raw::{OracleNoiseParams, SensorProfile};
use lownoise::sim::{round_to_dn, synthesize_physics, RngStream, SceneSpec};
use lownoise::train::{simulate_pairs, split_validation, train_denoiser, train_noise_model, TrainConfig, TrainPair};

fn main() -> lownoise::Result<()> {
    let oracle = OracleNoiseParams::new(2.0, 1.0, 1.0)?;
    let profile = SensorProfile::new(1600, 2.0, oracle.total_variance().sqrt())?.with_oracle(oracle)?;
    let scene = SceneSpec { height: 16, width: 16, peak: 40.0, black_level: 64, white_level: 1023 };
    let pairs = simulate_pairs(&scene, (5.0, 40.0), &profile, 64, &RngStream::new(5))?;
    let (train, val) = split_validation(pairs, 0.25);

    let config = TrainConfig {
        epochs: 2,
        patch_size: 16,
        batch_size: 8,
        critic_steps: 1,
        critic_patch: 2,
        critic_dim: 16,
        gen_levels: 2,
        gen_width: 8,
        den_levels: 2,
        den_width: 8,
        ..TrainConfig::default()
    };
    let (denoiser, _) = train_denoiser(&train, &val, &config)?;
    let (model, _, log) = train_noise_model(&train, &val, &denoiser, &TrainConfig { lr_init: 5e-5, ..config })?;
    for e in &log {
        println!("epoch {} critic {:.4} generator {:.4} val KLD {:.5}", e.epoch, e.critic_loss, e.gen_loss, e.val_kld);
    }

    let tuples: Vec<_> = val.iter().map(TrainPair::as_tuple).collect();
    let rng = RngStream::new(9);
    let learned = akld(&tuples, 2, &rng, |c, _, r| model.synthesize(c, &profile, r))?;
    let oracle = akld(&tuples, 2, &rng, |c, _, r| Ok(round_to_dn(&synthesize_physics(c, &profile, r)?)))?;
    println!("held-out AKLD learned {:.5}, oracle sensor {:.5}", learned.mean, oracle.mean);
    Ok(())
}
