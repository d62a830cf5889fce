use lownoise::models::{Generator, NoiseModel, UNetConfig};
use lownoise::raw::{read_raw, write_raw, OracleNoiseParams, PixelDomain, ProfileSet, RawPatch, SensorProfile};
use lownoise::sim::{
    procedural_scene, round_to_dn, sample_shot_noise, shot_noise_values, synthesize_physics, RngStream, SceneSpec,
    DEFAULT_POISSON_SWITCH,
};
use lownoise::train::simulate_pairs;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

fn scene(peak: f64) -> SceneSpec {
    SceneSpec { height: 8, width: 8, peak, black_level: 64, white_level: 1023 }
}

fn oracle_profile() -> SensorProfile {
    let o = OracleNoiseParams::new(2.0, 1.0, 1.0).unwrap();
    SensorProfile::new(1600, 2.0, o.total_variance().sqrt()).unwrap().with_oracle(o).unwrap()
}

/// Chi-square p-value of `counts` against Poisson(lambda), tail pooled.
fn poisson_gof(counts: &[f64], lambda: f64) -> f64 {
    let last = (lambda + 6.0 * lambda.sqrt()).ceil() as usize;
    let mut observed = vec![0.0; last + 1];
    for &c in counts {
        observed[(c.round() as usize).min(last)] += 1.0;
    }
    let n = counts.len() as f64;
    let pois = Poisson::new(lambda).unwrap();
    let mut expected: Vec<f64> = (0..last).map(|k| n * pois.pmf(k as u64)).collect();
    expected.push(n - expected.iter().sum::<f64>());
    // merge sparse cells from the top so that every expected count is >= 5
    let (mut obs, mut exp) = (Vec::new(), Vec::new());
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(&expected).rev() {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if let (Some(o), Some(e)) = (obs.last_mut(), exp.last_mut()) {
        *o += o_acc;
        *e += e_acc;
    }
    let chi2: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    1.0 - ChiSquared::new((obs.len() - 1) as f64).unwrap().cdf(chi2)
}

#[test]
fn low_light_shot_noise_matches_the_poisson_pmf() {
    for (i, lambda) in [0.5, 2.0, 9.0, 25.0].into_iter().enumerate() {
        let k = 3.0;
        let v = shot_noise_values(&vec![lambda * k; 50_000], k, &RngStream::new(i as u64), DEFAULT_POISSON_SWITCH).unwrap();
        let counts: Vec<f64> = v.iter().map(|x| x / k).collect();
        let p = poisson_gof(&counts, lambda);
        assert!(p > 1e-3, "lambda {lambda}: p = {p}");
    }
}

#[test]
fn shot_noise_patch_stays_in_range() {
    let clean = procedural_scene(&scene(900.0), &RngStream::new(1)).unwrap();
    let noisy = sample_shot_noise(&clean, 4.0, &RngStream::new(2)).unwrap();
    let top = f64::from(clean.white_level() - clean.black_level());
    assert!(noisy.data().iter().all(|&v| (0.0..=top).contains(&v)));
}

#[test]
fn saved_noise_model_synthesizes_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut profiles = ProfileSet::new();
    profiles.insert(oracle_profile()).unwrap();
    let model = NoiseModel::new(Generator::new(UNetConfig { levels: 1, base_width: 4 }, &RngStream::new(3)).unwrap(), profiles);
    let path = dir.path().join("nm.ckpt");
    model.save(&path).unwrap();
    let back = NoiseModel::load(&path).unwrap();
    let clean = procedural_scene(&scene(40.0), &RngStream::new(4)).unwrap();
    let a = model.synthesize_iso(&clean, 1600, &RngStream::new(5)).unwrap();
    let b = back.synthesize_iso(&clean, 1600, &RngStream::new(5)).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|v| v.fract() == 0.0), "output is whole DN");
    assert!(back.synthesize_iso(&clean, 3200, &RngStream::new(5)).is_err());
}

#[test]
fn fresh_model_without_read_noise_is_pure_shot_noise() {
    let mut profiles = ProfileSet::new();
    let profile = SensorProfile::new(100, 2.0, 0.0).unwrap();
    profiles.insert(profile).unwrap();
    let model = NoiseModel::new(Generator::new(UNetConfig { levels: 1, base_width: 4 }, &RngStream::new(6)).unwrap(), profiles);
    let clean = procedural_scene(&scene(30.0), &RngStream::new(7)).unwrap();
    let rng = RngStream::new(8);
    let synth = model.synthesize(&clean, &profile, &rng).unwrap();
    let shot = shot_noise_values(clean.data(), 2.0, &rng.split(0), DEFAULT_POISSON_SWITCH).unwrap();
    assert_eq!(synth.data(), &shot[..]);
}

#[test]
fn simulated_pairs_are_reproducible_and_integer() {
    let a = simulate_pairs(&scene(50.0), (5.0, 50.0), &oracle_profile(), 4, &RngStream::new(9)).unwrap();
    let b = simulate_pairs(&scene(50.0), (5.0, 50.0), &oracle_profile(), 4, &RngStream::new(9)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.clean, y.clean);
        assert_eq!(x.noisy, y.noisy);
        assert!(x.noisy.data().iter().all(|v| v.fract() == 0.0));
    }
    assert_ne!(a[0].noisy, a[1].noisy);
}

proptest! {
    #[test]
    fn lrf_round_trip_preserves_whole_dn(seed in 0u64..1000, h in 1usize..6, w in 1usize..6, black in 0u16..100) {
        let mut s = RngStream::new(seed).generator();
        let white = 1023;
        let data: Vec<f64> = (0..4 * h * w).map(|_| f64::from(black) + s.below(usize::from(white - black) + 1) as f64).collect();
        let patch = RawPatch::new(data, h, w, black, white, PixelDomain::Raw).unwrap();
        let profile = SensorProfile::new(800, 1.5, 3.0).unwrap();
        let mut buf = Vec::new();
        write_raw(&patch, &profile, &mut buf).unwrap();
        let (back, prof) = read_raw(&buf[..]).unwrap();
        prop_assert_eq!(back, patch);
        prop_assert_eq!(prof, profile);
    }

    #[test]
    fn physics_synthesis_rounds_into_the_sensor_range(seed in 0u64..1000, peak in 1.0f64..900.0) {
        let clean = procedural_scene(&scene(peak), &RngStream::new(seed)).unwrap();
        let noisy = round_to_dn(&synthesize_physics(&clean, &oracle_profile(), &RngStream::new(seed + 1)).unwrap());
        let top = f64::from(clean.white_level() - clean.black_level());
        prop_assert!(noisy.data().iter().all(|&v| v.fract() == 0.0 && (0.0..=top).contains(&v)));
    }
}
