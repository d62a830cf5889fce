//! Scores a batch with the Fourier transformer critic and its vanilla
//! counterpart.

use lownoise::autodiff::Tensor;
use lownoise::models::{CriticConfig, CriticKind, NoiseCritic};
use lownoise::sim::RngStream;

fn main() -> lownoise::Result<()> {
    let mut s = RngStream::new(1).generator();
    let batch = Tensor::from_fn(&[3, 4, 32, 32], |i| if i < 4 * 32 * 32 { 0.0 } else { 0.01 * s.normal() });
    for kind in [CriticKind::Fourier, CriticKind::Vanilla] {
        let config = CriticConfig { kind, ..CriticConfig::default() };
        let critic = NoiseCritic::new(config, &RngStream::new(7))?;
        println!(
            "{kind:?}: {} parameters, token lengths {:?}, scores {:?}",
            critic.params.numel(),
            config.sequence_lengths(),
            critic.score(&batch)?
        );
    }
    Ok(())
}
