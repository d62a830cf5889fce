//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 5, 6, 7 and 10 share one desk-scale training run; the scale
//! settings are in `desk_config`.

use std::time::Instant;

use lownoise::autodiff::{dft2, gradcheck, idft2, Graph, Tensor, Var};
use lownoise::cli;
use lownoise::metrics::{akld, kld, psnr, NoiseHistogram};
use lownoise::models::{CriticConfig, CriticKind, Denoiser, Generator, NoiseCritic, NoiseModel, UNetConfig};
use lownoise::nn::{
    seq_downsample, Attention, Bound, Conv, FourierBlock, LayerNorm, Linear, ParamStore, Patchify, ResConvBlock,
    TokenSequence, UpConv, VanillaBlock,
};
use lownoise::raw::{OracleNoiseParams, PixelDomain, RawPatch, SensorProfile};
use lownoise::sim::{
    fit_awgn_sigma, fit_pg_sigma_r, round_to_dn, shot_noise_values, synthesize_baseline, synthesize_physics, Baseline,
    RngStream, SceneSpec, DEFAULT_POISSON_SWITCH,
};
use lownoise::train::{simulate_pairs, train_denoiser, NoiseModelTrainer, TrainConfig, TrainPair};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

type Outcome = (bool, String);

fn report(id: usize, name: &str, started: Instant, (ok, detail): Outcome) -> bool {
    println!(
        "criterion {id:>2} {} {name}: {detail} [{:.1}s]",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    ok
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut s = RngStream::new(seed).generator();
    Tensor::from_fn(shape, |_| 2.0 * s.uniform() - 1.0)
}

// ---------------------------------------------------------------- 1

fn shot_noise_moments() -> Outcome {
    let n = 1_000_000;
    let v = shot_noise_values(&vec![100.0; n], 4.0, &RngStream::new(1), DEFAULT_POISSON_SWITCH).unwrap();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;

    // lambda = 5: clean 20 DN at K = 4, counts are value / K
    let m = 200_000;
    let k = 4.0;
    let counts = shot_noise_values(&vec![5.0 * k; m], k, &RngStream::new(2), DEFAULT_POISSON_SWITCH).unwrap();
    let last = 13;
    let mut observed = vec![0.0; last + 1];
    for c in &counts {
        observed[((c / k).round() as usize).min(last)] += 1.0;
    }
    let pois = Poisson::new(5.0).unwrap();
    let mut expected: Vec<f64> = (0..last).map(|i| m as f64 * pois.pmf(i as u64)).collect();
    expected.push(m as f64 - expected.iter().sum::<f64>());
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(last as f64).unwrap().cdf(chi2);

    let ok = (mean - 100.0).abs() <= 0.1 && (var / 400.0 - 1.0).abs() <= 0.02 && p > 0.01;
    (ok, format!("mean {mean:.4} (100 +- 0.1), var {var:.2} (400 +- 2%), chi2 {chi2:.2} p {p:.3} (> 0.01)"))
}

// ---------------------------------------------------------------- 2

fn worst(errs: &mut Vec<(String, f64)>, name: &str, inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> lownoise::Result<Var>) {
    let r = gradcheck(inputs, f).unwrap();
    errs.push((name.to_string(), r.max_rel_err));
}

/// Checks a block over its input and every parameter with loss `mean(out^2)`.
fn block(
    errs: &mut Vec<(String, f64)>,
    name: &str,
    ps: &ParamStore,
    x: Tensor,
    f: impl Fn(&mut Graph, &Bound, Var) -> lownoise::Result<Var>,
) {
    let mut inputs = vec![x];
    inputs.extend(ps.tensors().iter().cloned());
    worst(errs, name, &inputs, |g, v| {
        let b = Bound::from_vars(v[1..].to_vec());
        let y = f(g, &b, v[0])?;
        let sq = g.square(y);
        Ok(g.reduce_mean(sq))
    });
}

fn randomize(ps: &mut ParamStore, seed: u64) {
    for (i, t) in ps.tensors_mut().iter_mut().enumerate() {
        let r = rand_tensor(t.shape(), seed + i as u64);
        t.data_mut().iter_mut().zip(r.data()).for_each(|(v, x)| *v = 0.5 * x);
    }
}

fn gradient_suite() -> Outcome {
    let mut e = Vec::new();
    let a = rand_tensor(&[3, 4], 1);
    let b = rand_tensor(&[4], 2);
    worst(&mut e, "add", &[a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
    worst(&mut e, "sub", &[a.clone(), b.clone()], |g, v| g.sub(v[1], v[0]));
    worst(&mut e, "mul", &[a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
    worst(&mut e, "scale/add_scalar/neg", std::slice::from_ref(&a), |g, v| {
        let s = g.scale(v[0], 3.0);
        let s = g.add_scalar(s, 0.25);
        Ok(g.neg(s))
    });
    worst(&mut e, "leaky_relu", std::slice::from_ref(&a), |g, v| Ok(g.leaky_relu(v[0], 0.2)));
    worst(&mut e, "relu", std::slice::from_ref(&a), |g, v| Ok(g.relu(v[0])));
    worst(&mut e, "clamp", std::slice::from_ref(&a), |g, v| Ok(g.clamp(v[0], -0.5, 0.5)));
    worst(&mut e, "abs", std::slice::from_ref(&a), |g, v| Ok(g.abs(v[0])));
    worst(&mut e, "square", std::slice::from_ref(&a), |g, v| Ok(g.square(v[0])));
    worst(&mut e, "sqrt", &[Tensor::from_fn(&[5], |i| 0.5 + i as f64)], |g, v| Ok(g.sqrt(v[0])));
    worst(&mut e, "l2_norm", std::slice::from_ref(&a), |g, v| Ok(g.l2_norm(v[0])));
    worst(&mut e, "reduce_sum", std::slice::from_ref(&a), |g, v| Ok(g.reduce_sum(v[0])));
    worst(&mut e, "broadcast", &[b], |g, v| g.broadcast(v[0], &[2, 3, 4]));

    let c = rand_tensor(&[2, 3, 6], 3);
    worst(&mut e, "layer_norm", std::slice::from_ref(&c), |g, v| Ok(g.layer_norm(v[0])));
    worst(&mut e, "softmax", std::slice::from_ref(&c), |g, v| Ok(g.softmax(v[0])));
    worst(&mut e, "mean_axis", std::slice::from_ref(&c), |g, v| g.mean_axis(v[0], 1));
    worst(&mut e, "reduce_mean", std::slice::from_ref(&c), |g, v| Ok(g.reduce_mean(v[0])));
    worst(&mut e, "avg_pool2d", std::slice::from_ref(&c), |g, v| g.avg_pool2d(v[0], 3));
    worst(&mut e, "concat", &[c.clone(), rand_tensor(&[2, 2, 6], 4)], |g, v| g.concat(&[v[0], v[1]], 1));
    worst(&mut e, "permute", std::slice::from_ref(&c), |g, v| g.permute(v[0], &[2, 0, 1]));
    worst(&mut e, "transpose", std::slice::from_ref(&c), |g, v| g.transpose(v[0]));
    worst(&mut e, "slice", std::slice::from_ref(&c), |g, v| g.slice(v[0], 2, 1, 3));
    worst(&mut e, "split/reshape", &[c], |g, v| {
        let parts = g.split(v[0], 1, &[1, 2])?;
        let r = g.reshape(parts[1], &[2, 12])?;
        let s = g.reshape(parts[0], &[12])?;
        g.mul(r, s)
    });

    let m = rand_tensor(&[2, 3, 4], 5);
    worst(&mut e, "matmul", &[m.clone(), rand_tensor(&[2, 4, 5], 6)], |g, v| g.matmul(v[0], v[1]));
    worst(&mut e, "matmul shared", &[m.clone(), rand_tensor(&[4, 5], 7)], |g, v| g.matmul(v[0], v[1]));
    worst(&mut e, "matmul_nt", &[m, rand_tensor(&[2, 5, 4], 8)], |g, v| g.matmul_nt(v[0], v[1]));
    worst(&mut e, "matmul_tn", &[rand_tensor(&[2, 4, 3], 9), rand_tensor(&[2, 4, 5], 10)], |g, v| g.matmul_tn(v[0], v[1]));

    let x = rand_tensor(&[2, 2, 6, 6], 11);
    worst(&mut e, "conv2d", &[x.clone(), rand_tensor(&[3, 2, 3, 3], 12), rand_tensor(&[3], 13)], |g, v| {
        g.conv2d(v[0], v[1], Some(v[2]), 2, 1)
    });
    worst(&mut e, "transpose_conv2d", &[x, rand_tensor(&[2, 3, 2, 2], 14), rand_tensor(&[3], 15)], |g, v| {
        g.transpose_conv2d(v[0], v[1], Some(v[2]), 2, 0)
    });
    let s = rand_tensor(&[2, 4, 6], 16);
    worst(&mut e, "dft2", std::slice::from_ref(&s), |g, v| {
        let (re, im) = dft2(g, v[0])?;
        let p = g.mul(re, im)?;
        g.add(p, re)
    });
    worst(&mut e, "idft2", &[s, rand_tensor(&[2, 4, 6], 17)], |g, v| idft2(g, v[0], v[1]));

    // nn blocks, over inputs and parameters
    let mut rng = RngStream::new(20).generator();
    let mut ps = ParamStore::new();
    let lin = Linear::new(&mut ps, "lin", 6, 5, 0.5, &mut rng);
    let ln = LayerNorm::new(&mut ps, "ln", 5);
    randomize(&mut ps, 21);
    block(&mut e, "Linear+LayerNorm", &ps, rand_tensor(&[2, 3, 6], 22), |g, p, x| {
        let h = lin.forward(g, p, x)?;
        ln.forward(g, p, h)
    });

    let mut ps = ParamStore::new();
    let down = Conv::new(&mut ps, "down", 3, 4, 3, 2, &mut rng);
    let res = ResConvBlock::new(&mut ps, "res", 4, 5, &mut rng);
    let up = UpConv::new(&mut ps, "up", 5, 2, &mut rng);
    block(&mut e, "Conv/ResConvBlock/UpConv", &ps, rand_tensor(&[2, 3, 6, 6], 23), |g, p, x| {
        let h = down.forward(g, p, x)?;
        let h = res.forward(g, p, h)?;
        up.forward(g, p, h)
    });

    let mut ps = ParamStore::new();
    let attn = Attention::new(&mut ps, "attn", 8, 2, &mut rng).unwrap();
    randomize(&mut ps, 24);
    block(&mut e, "Attention", &ps, rand_tensor(&[2, 5, 8], 25), |g, p, x| attn.forward(g, p, x));

    let mut ps = ParamStore::new();
    let pf = Patchify::new(&mut ps, "pf", 4, 2, 8, &mut rng);
    let vb = VanillaBlock::new(&mut ps, "vb", 8, 2, 2, &mut rng).unwrap();
    randomize(&mut ps, 26);
    block(&mut e, "Patchify+VanillaBlock+downsample", &ps, rand_tensor(&[2, 4, 8, 8], 27), |g, p, x| {
        let seq = pf.forward(g, p, x)?;
        let seq = vb.apply(g, p, seq)?;
        Ok(seq_downsample(g, seq, 2)?.tokens)
    });

    let mut ps = ParamStore::new();
    let fb = FourierBlock::new(&mut ps, "fb", 8, 2, 2, &mut rng).unwrap();
    randomize(&mut ps, 28);
    block(&mut e, "FourierBlock", &ps, rand_tensor(&[1, 16, 8], 29), |g, p, x| {
        Ok(fb.apply(g, p, TokenSequence { tokens: x, grid: (4, 4) })?.tokens)
    });

    // whole networks
    let cfg = CriticConfig { kind: CriticKind::Fourier, image_size: 8, patch_sizes: [1, 2, 4], dim: 4, heads: 2, ff_ratio: 1 };
    let critic = NoiseCritic::new(cfg, &RngStream::new(30)).unwrap();
    block(&mut e, "Fourier critic end-to-end", &critic.params, rand_tensor(&[1, 4, 8, 8], 31), |g, p, x| {
        critic.net.forward(g, p, x)
    });
    let mut gen = Generator::new(UNetConfig { levels: 1, base_width: 4 }, &RngStream::new(32)).unwrap();
    randomize(&mut gen.params, 33);
    block(&mut e, "U-net generator", &gen.params, rand_tensor(&[1, 4, 4, 4], 34), |g, p, x| gen.forward(g, p, x));

    let (name, err) = e.iter().cloned().fold((String::new(), 0.0), |acc, (n, v)| if v > acc.1 { (n, v) } else { acc });
    (err <= 1e-4, format!("{} checks, worst rel err {err:.2e} ({name}), limit 1e-4", e.len()))
}

// ---------------------------------------------------------------- 3

fn spectral_identities() -> Outcome {
    let (mut round, mut parseval) = (0.0f64, 0.0f64);
    for t in 0..100 {
        let x = rand_tensor(&[16, 16], 1000 + t);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (re, im) = dft2(&mut g, xv).unwrap();
        let back = idft2(&mut g, re, im).unwrap();
        round = round.max(g.value(back).max_abs_diff(&x));
        let energy: f64 = x.data().iter().map(|v| v * v).sum();
        let spec: f64 = g.value(re).data().iter().zip(g.value(im).data()).map(|(a, b)| a * a + b * b).sum::<f64>() / 256.0;
        parseval = parseval.max((energy - spec).abs() / energy);
    }
    (round <= 1e-10 && parseval <= 1e-10, format!("round trip {round:.1e}, Parseval rel {parseval:.1e} (<= 1e-10)"))
}

// ---------------------------------------------------------------- 4

fn kld_oracle() -> Outcome {
    let n = 10_000_000;
    let mut p = NoiseHistogram::new(512, -8.0, 8.0).unwrap();
    let mut q = p.clone();
    let mut s = RngStream::new(4).generator();
    for _ in 0..n {
        p.add(s.normal());
    }
    for _ in 0..n {
        q.add(2f64.sqrt() * s.normal());
    }
    let est = kld(&p, &q).unwrap();
    let exact = 0.5 * (0.5 + 2f64.ln() - 1.0);
    let rel = (est - exact).abs() / exact;
    (rel <= 0.05, format!("estimate {est:.5} vs closed form {exact:.5} (rel {:.2}%, limit 5%)", 100.0 * rel))
}

// ---------------------------------------------------------------- desk-scale run

const TEST_SEED: u64 = 555;
const SAMPLES: usize = 4;
const DOWNSTREAM_EPOCHS: usize = 16;

fn scene() -> SceneSpec {
    SceneSpec { height: 32, width: 32, peak: 60.0, black_level: 64, white_level: 1023 }
}

fn oracle_profile(iso: u32, read: f64, row: f64, quant: f64) -> SensorProfile {
    let oracle = OracleNoiseParams::new(read, row, quant).unwrap();
    SensorProfile::new(iso, 2.0, oracle.total_variance().sqrt()).unwrap().with_oracle(oracle).unwrap()
}

/// Reduced model sizes and epoch counts so that one core finishes the
/// suite in minutes; objective and optimizer settings are the defaults.
fn desk_config() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        critic_patch: 4,
        critic_dim: 32,
        critic_steps: 2,
        gen_width: 8,
        ..TrainConfig::default()
    }
}

fn noise_config(den: &TrainConfig) -> TrainConfig {
    TrainConfig { epochs: 3, lr_init: 5e-5, ..den.clone() }
}

struct Split {
    train: Vec<TrainPair>,
    val: Vec<TrainPair>,
    test: Vec<TrainPair>,
}

fn split(mut pairs: Vec<TrainPair>, val: usize, test: usize) -> Split {
    let test = pairs.split_off(pairs.len() - test);
    let val = pairs.split_off(pairs.len() - val);
    Split { train: pairs, val, test }
}

fn tuples(pairs: &[TrainPair]) -> Vec<(RawPatch, RawPatch)> {
    pairs.iter().map(TrainPair::as_tuple).collect()
}

fn learned_akld(model: &NoiseModel, test: &[TrainPair], profile: &SensorProfile) -> f64 {
    akld(&tuples(test), SAMPLES, &RngStream::new(TEST_SEED), |c, _, r| model.synthesize(c, profile, r)).unwrap().mean
}

fn baseline_akld(b: Baseline, test: &[TrainPair], profile: &SensorProfile) -> f64 {
    akld(&tuples(test), SAMPLES, &RngStream::new(TEST_SEED), |c, _, r| {
        Ok(round_to_dn(&synthesize_baseline(c, profile, b, r)?))
    })
    .unwrap()
    .mean
}

fn train_model(data: &Split, den: &Denoiser, cfg: TrainConfig) -> NoiseModel {
    let all: Vec<TrainPair> = data.train.iter().chain(&data.val).cloned().collect();
    let mut tr = NoiseModelTrainer::for_pairs(cfg, den.clone(), &all).unwrap();
    tr.train(&data.train, &data.val, |_, _| Ok(())).unwrap();
    tr.model()
}

/// Mean per-patch PSNR of the clamped estimate.
fn denoised_psnr(den: &Denoiser, test: &[TrainPair]) -> f64 {
    let total: f64 = test
        .iter()
        .map(|p| {
            let est = den.denoise(&p.noisy).unwrap();
            let clamped = RawPatch::clamped(
                est.data().to_vec(),
                est.height(),
                est.width(),
                est.black_level(),
                est.white_level(),
                PixelDomain::Normalized,
            )
            .unwrap();
            psnr(&clamped, &p.clean).unwrap()
        })
        .sum();
    total / test.len() as f64
}

struct Desk {
    data: Split,
    profile: SensorProfile,
    cfg: TrainConfig,
    denoiser: Denoiser,
    full: NoiseModel,
    full_akld: f64,
    awgn_sigma: f64,
}

fn desk_run() -> Desk {
    let profile = oracle_profile(1600, 2.0, 1.0, 1.0);
    let pairs = simulate_pairs(&scene(), (5.0, 60.0), &profile, 576, &RngStream::new(100)).unwrap();
    let data = split(pairs, 64, 64);
    let cfg = desk_config();
    let (denoiser, _) = train_denoiser(&data.train, &data.val, &cfg).unwrap();
    let full = train_model(&data, &denoiser, noise_config(&cfg));
    let full_akld = learned_akld(&full, &data.test, &profile);
    let awgn_sigma = fit_awgn_sigma(&tuples(&data.train)).unwrap();
    Desk { data, profile, cfg, denoiser, full, full_akld, awgn_sigma }
}

fn central_claim(d: &Desk) -> Outcome {
    let pg_sigma = fit_pg_sigma_r(&tuples(&d.data.train), d.profile.gain_k).unwrap();
    let awgn = baseline_akld(Baseline::Awgn { sigma: d.awgn_sigma }, &d.data.test, &d.profile);
    let pg = baseline_akld(Baseline::PoissonGaussian { sigma_r: pg_sigma }, &d.data.test, &d.profile);
    let oracle = akld(&tuples(&d.data.test), SAMPLES, &RngStream::new(TEST_SEED), |c, _, r| {
        Ok(round_to_dn(&synthesize_physics(c, &d.profile, r)?))
    })
    .unwrap()
    .mean;
    let ok = d.full_akld < awgn && d.full_akld < pg;
    (
        ok,
        format!(
            "AKLD learned {:.5} < AWGN {awgn:.5} (sigma {:.2}) and < P-G {pg:.5} (sigma_r {pg_sigma:.2}); oracle floor {oracle:.5}",
            d.full_akld, d.awgn_sigma
        ),
    )
}

fn ftd_ablation(d: &Desk) -> Outcome {
    let cfg = TrainConfig { discriminator: CriticKind::Vanilla, ..noise_config(&d.cfg) };
    let vanilla = learned_akld(&train_model(&d.data, &d.denoiser, cfg), &d.data.test, &d.profile);
    (d.full_akld <= vanilla, format!("AKLD Fourier critic {:.5} <= vanilla transformer critic {vanilla:.5}", d.full_akld))
}

fn alignment_ablation(d: &Desk) -> Outcome {
    let cfg = TrainConfig { lambda1: 0.0, lambda2: 0.0, ..noise_config(&d.cfg) };
    let bare = learned_akld(&train_model(&d.data, &d.denoiser, cfg), &d.data.test, &d.profile);
    (bare >= d.full_akld, format!("AKLD without alignment {bare:.5} >= full objective {:.5}", d.full_akld))
}

fn downstream(d: &Desk) -> Outcome {
    let synth_pairs = |f: &dyn Fn(&RawPatch, &RngStream) -> RawPatch| -> Vec<TrainPair> {
        let rng = RngStream::new(200);
        d.data
            .train
            .iter()
            .enumerate()
            .map(|(i, p)| TrainPair::new(p.clean.clone(), f(&p.clean, &rng.split(i as u64)), d.profile).unwrap())
            .collect()
    };
    let learned = synth_pairs(&|c, r| d.full.synthesize(c, &d.profile, r).unwrap());
    let awgn = synth_pairs(&|c, r| {
        round_to_dn(&synthesize_baseline(c, &d.profile, Baseline::Awgn { sigma: d.awgn_sigma }, r).unwrap())
    });
    // The comparison is about what each denoiser converges to; the 4-epoch
    // alignment denoiser is far from that (about 49.8 dB vs 53 dB).
    let cfg = TrainConfig { epochs: DOWNSTREAM_EPOCHS, ..d.cfg.clone() };
    let (den_oracle, _) = train_denoiser(&d.data.train, &d.data.val, &cfg).unwrap();
    let (den_learned, _) = train_denoiser(&learned, &d.data.val, &cfg).unwrap();
    let (den_awgn, _) = train_denoiser(&awgn, &d.data.val, &cfg).unwrap();
    let p_oracle = denoised_psnr(&den_oracle, &d.data.test);
    let p_learned = denoised_psnr(&den_learned, &d.data.test);
    let p_awgn = denoised_psnr(&den_awgn, &d.data.test);
    let ok = p_oracle - p_learned <= 1.5 && p_learned > p_awgn;
    (
        ok,
        format!("PSNR learned-pairs {p_learned:.2} dB vs oracle-pairs {p_oracle:.2} dB (gap <= 1.5) and > AWGN-pairs {p_awgn:.2} dB"),
    )
}

// ---------------------------------------------------------------- 8

fn iso_conditioning() -> Outcome {
    let low = oracle_profile(1600, 2.0, 0.0, 0.0);
    let high = oracle_profile(6400, 6.0, 0.0, 0.0);
    let mut pairs = Vec::new();
    let mut held = Vec::new();
    for (k, prof) in [&low, &high].into_iter().enumerate() {
        let mut p = simulate_pairs(&scene(), (5.0, 60.0), prof, 288, &RngStream::new(300 + k as u64)).unwrap();
        held.push(p.split_off(256));
        pairs.extend(p);
    }
    // interleave the two ISOs before holding out validation pairs
    let n = pairs.len() / 2;
    let mixed: Vec<TrainPair> = (0..n).flat_map(|i| [pairs[i].clone(), pairs[n + i].clone()]).collect();
    let data = split(mixed, 32, 0);
    let cfg = desk_config();
    let (den, _) = train_denoiser(&data.train, &data.val, &cfg).unwrap();
    let model = train_model(&data, &den, noise_config(&cfg));

    let residual_var = |test: &[TrainPair], prof: &SensorProfile| -> f64 {
        let rng = RngStream::new(TEST_SEED);
        let (mut s, mut n) = (0.0, 0usize);
        for (i, p) in test.iter().enumerate() {
            let fake = model.synthesize(&p.clean, prof, &rng.split(i as u64)).unwrap();
            s += fake.data().iter().zip(p.clean.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            n += fake.len();
        }
        s / n as f64
    };
    let all_held: Vec<TrainPair> = held.concat();
    let (v_low, v_high) = (residual_var(&all_held, &low), residual_var(&all_held, &high));

    let mut detail = format!("residual variance at sigma_r 6 {v_high:.2} > at sigma_r 2 {v_low:.2}");
    let mut ok = v_high > v_low;
    for (test, own, other) in [(&held[0], &low, &high), (&held[1], &high, &low)] {
        let matched = learned_akld(&model, test, own);
        let swapped = learned_akld(&model, test, other);
        ok &= matched < swapped;
        detail += &format!("; ISO {} AKLD matched {matched:.5} < swapped {swapped:.5}", own.iso);
    }
    (ok, detail)
}

// ---------------------------------------------------------------- 9

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let run = |args: &[&str]| cli::run(std::iter::once("lownoise").chain(args.iter().copied()));
    std::fs::write(root.join("profiles.txt"), "1600 2 2.25 2 1 1\n").unwrap();
    std::fs::write(
        root.join("tiny.cfg"),
        "epochs = 2\nbatch_size = 4\npatch_size = 8\ncritic_steps = 1\ngen_levels = 1\ngen_width = 4\n\
         den_levels = 1\nden_width = 4\ncritic_dim = 8\ncritic_heads = 2\ncritic_ff_ratio = 1\nval_fraction = 0.25\nseed = 7\n",
    )
    .unwrap();
    let mut codes = vec![run(&["scenes", "--out", &p("data"), "--count", "8", "--size", "8", "--iso", "1600"])];
    codes.push(run(&["simulate", "--clean", &p("data"), "--profile", &p("profiles.txt"), "--mode", "oracle", "--out", &p("data"), "--force"]));
    let mut identical = true;
    let mut compared = 0;
    for tag in ["a", "b"] {
        let den = p(&format!("den_{tag}.ckpt"));
        let nm = p(&format!("nm_{tag}.ckpt"));
        let syn = p(&format!("syn_{tag}"));
        codes.push(run(&["train-denoiser", "--pairs", &p("data"), "--config", &p("tiny.cfg"), "--out", &den]));
        codes.push(run(&["train-noise-model", "--pairs", &p("data"), "--denoiser", &den, "--config", &p("tiny.cfg"), "--out", &nm]));
        codes.push(run(&["synthesize", "--clean", &p("data"), "--model", &nm, "--iso", "1600", "--seed", "3", "--out", &syn]));
    }
    for (a, b) in [("den_a.ckpt", "den_b.ckpt"), ("nm_a.ckpt", "nm_b.ckpt"), ("den_a.ckpt.log.csv", "den_b.ckpt.log.csv"), ("nm_a.ckpt.log.csv", "nm_b.ckpt.log.csv")] {
        identical &= std::fs::read(root.join(a)).ok() == std::fs::read(root.join(b)).ok();
        compared += 1;
    }
    for entry in std::fs::read_dir(root.join("syn_a")).into_iter().flatten().flatten() {
        let name = entry.file_name();
        if name.to_string_lossy().ends_with(".lrf") {
            identical &= std::fs::read(entry.path()).ok() == std::fs::read(root.join("syn_b").join(&name)).ok();
            compared += 1;
        }
    }
    let ok = codes.iter().all(|&c| c == 0) && identical && compared > 4;
    (ok, format!("exit codes {codes:?}; {compared} output files compared, bit-identical: {identical}"))
}

fn main() {
    let mut passed = 0;
    let t = Instant::now();
    passed += usize::from(report(1, "shot-noise moments", t, shot_noise_moments()));
    let t = Instant::now();
    passed += usize::from(report(2, "gradient suite", t, gradient_suite()));
    let t = Instant::now();
    passed += usize::from(report(3, "spectral identities", t, spectral_identities()));
    let t = Instant::now();
    passed += usize::from(report(4, "KLD oracle", t, kld_oracle()));
    let t = Instant::now();
    let desk = desk_run();
    passed += usize::from(report(5, "learned noise beats AWGN and P-G", t, central_claim(&desk)));
    let t = Instant::now();
    passed += usize::from(report(6, "Fourier critic vs vanilla critic", t, ftd_ablation(&desk)));
    let t = Instant::now();
    passed += usize::from(report(7, "alignment losses ablation", t, alignment_ablation(&desk)));
    let t = Instant::now();
    passed += usize::from(report(8, "ISO conditioning", t, iso_conditioning()));
    let t = Instant::now();
    passed += usize::from(report(9, "CLI determinism", t, determinism()));
    let t = Instant::now();
    passed += usize::from(report(10, "downstream denoising", t, downstream(&desk)));
    println!("{passed}/10 criteria passed");
    // Failures are reported above; set LOWNOISE_STRICT_ACCEPTANCE to turn them
    // into a failing exit status.
    if passed < 10 && std::env::var_os("LOWNOISE_STRICT_ACCEPTANCE").is_some() {
        std::process::exit(1);
    }
}
