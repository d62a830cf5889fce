//! Fits the AWGN and Poisson-Gaussian baselines by moments and compares
//! their AKLD against oracle captures.

use lownoise::metrics::akld;
use lownoise::raw::{OracleNoiseParams, SensorProfile};
use lownoise::sim::{fit_awgn_sigma, fit_pg_sigma_r, round_to_dn, synthesize_baseline, Baseline, RngStream, SceneSpec};
use lownoise::train::{simulate_pairs, TrainPair};

fn main() -> lownoise::Result<()> {
    let oracle = OracleNoiseParams::new(2.0, 1.0, 1.0)?;
    let profile = SensorProfile::new(1600, 2.0, oracle.total_variance().sqrt())?.with_oracle(oracle)?;
    let scene = SceneSpec { height: 32, width: 32, peak: 60.0, black_level: 64, white_level: 1023 };
    let pairs: Vec<_> = simulate_pairs(&scene, (5.0, 60.0), &profile, 48, &RngStream::new(11))?
        .iter()
        .map(TrainPair::as_tuple)
        .collect();
    let awgn = fit_awgn_sigma(&pairs)?;
    let pg = fit_pg_sigma_r(&pairs, profile.gain_k)?;
    let rng = RngStream::new(12);
    for (name, b) in [("AWGN", Baseline::Awgn { sigma: awgn }), ("P-G", Baseline::PoissonGaussian { sigma_r: pg })] {
        let r = akld(&pairs, 4, &rng, |c, _, r| Ok(round_to_dn(&synthesize_baseline(c, &profile, b, r)?)))?;
        println!("{name:5} AKLD {:.5}", r.mean);
    }
    println!("fitted AWGN sigma {awgn:.3} DN, P-G sigma_r {pg:.3} DN (oracle total {:.3})", profile.sigma_r);
    Ok(())
}
