//! Trains a small denoiser on oracle-sensor pairs and reports validation PSNR.

use lownoise::raw::{OracleNoiseParams, SensorProfile};
use lownoise::sim::{RngStream, SceneSpec};
use lownoise::train::{simulate_pairs, split_validation, train_denoiser, DenoiserEpoch, TrainConfig};

fn main() -> lownoise::Result<()> {
    let oracle = OracleNoiseParams::new(2.0, 1.0, 1.0)?;
    let profile = SensorProfile::new(1600, 2.0, oracle.total_variance().sqrt())?.with_oracle(oracle)?;
    let scene = SceneSpec { height: 32, width: 32, peak: 60.0, black_level: 64, white_level: 1023 };
    let pairs = simulate_pairs(&scene, (5.0, 60.0), &profile, 96, &RngStream::new(3))?;
    let (train, val) = split_validation(pairs, 0.25);

    let config = TrainConfig { epochs: 10, den_levels: 2, den_width: 8, ..TrainConfig::default() };
    let (_, log) = train_denoiser(&train, &val, &config)?;
    println!("{}", DenoiserEpoch::CSV_HEADER);
    for e in &log {
        println!("{}", e.csv_row());
    }
    Ok(())
}
