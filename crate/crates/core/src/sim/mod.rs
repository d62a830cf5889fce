//! Physics-based noise synthesis in black-level-subtracted DN.
//!
//! Shot noise follows `Y_hat = Poisson(Y / K) * K`. The oracle sensor adds a
//! signal-independent field made of Gaussian read noise, a per-row Gaussian
//! offset shared along each row of each plane, and quantization of that sum.
//! Composition clamps exactly once, after all stages.

mod ptc;
mod rng;
mod scenes;

pub use ptc::{calibrate_ptc, fit_awgn_sigma, fit_pg_sigma_r, ExposureLevel, PtcFit};
pub use rng::{RngStream, Sampler};
pub use scenes::{procedural_scene, SceneSpec};

use crate::error::{Error, Result};
use crate::raw::{OracleNoiseParams, PixelDomain, RawPatch, SensorProfile, CHANNELS};

/// Rate at and above which Poisson draws use the rounded Gaussian.
pub const DEFAULT_POISSON_SWITCH: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    SignalDependent,
    SignalIndependent,
    Composite,
}

/// Additive noise in DN, `[4, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseField {
    pub data: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub kind: NoiseKind,
}

impl NoiseField {
    pub fn zeros(height: usize, width: usize, kind: NoiseKind) -> Self {
        Self {
            data: vec![0.0; CHANNELS * height * width],
            height,
            width,
            kind,
        }
    }
}

fn require_dn(patch: &RawPatch, op: &str) -> Result<()> {
    if patch.domain() != PixelDomain::BlackSubtracted {
        return Err(Error::State(format!(
            "{op} needs black-level-subtracted DN input, got {:?}",
            patch.domain()
        )));
    }
    Ok(())
}

fn check_gain(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!("gain K must be > 0, got {k}")));
    }
    Ok(())
}

/// Unclamped `Poisson(y / k) * k` for every value.
pub fn shot_noise_values(clean: &[f64], k: f64, rng: &RngStream, switch: f64) -> Result<Vec<f64>> {
    check_gain(k)?;
    if let Some((i, v)) = clean.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("negative or NaN clean value {v} at {i}")));
    }
    let mut g = rng.generator();
    Ok(clean.iter().map(|&y| g.poisson(y / k, switch) * k).collect())
}

/// Signal-dependent synthesis. Output is clamped to the sensor range only
/// so that it remains a valid patch; composed pipelines use the unclamped
/// values.
pub fn sample_shot_noise(clean: &RawPatch, k: f64, rng: &RngStream) -> Result<RawPatch> {
    require_dn(clean, "sample_shot_noise")?;
    let values = shot_noise_values(clean.data(), k, rng, DEFAULT_POISSON_SWITCH)?;
    clean.with_data(values, PixelDomain::BlackSubtracted)
}

/// Oracle signal-independent field.
pub fn sample_oracle_indep(
    height: usize,
    width: usize,
    params: &OracleNoiseParams,
    rng: &RngStream,
) -> Result<NoiseField> {
    params.validate()?;
    let mut field = NoiseField::zeros(height, width, NoiseKind::SignalIndependent);
    if params.is_noiseless() {
        return Ok(field);
    }
    let mut g = rng.generator();
    for row in field.data.chunks_mut(width) {
        let offset = params.sigma_row * g.normal();
        for v in row.iter_mut() {
            let x = params.sigma_read * g.normal() + offset;
            *v = if params.quant_step > 0.0 {
                (x / params.quant_step).round() * params.quant_step
            } else {
                x
            };
        }
    }
    Ok(field)
}

/// `D = clamp(Poisson(Y/K)K + N_indep, 0, white - black)` with the profile's
/// oracle sensor as the signal-independent source.
pub fn synthesize_physics(clean: &RawPatch, profile: &SensorProfile, rng: &RngStream) -> Result<RawPatch> {
    require_dn(clean, "synthesize_physics")?;
    let oracle = profile
        .oracle
        .ok_or_else(|| Error::Parameter(format!("profile for ISO {} has no oracle parameters", profile.iso)))?;
    let mut d = shot_noise_values(clean.data(), profile.gain_k, &rng.split(0), DEFAULT_POISSON_SWITCH)?;
    let n = sample_oracle_indep(clean.height(), clean.width(), &oracle, &rng.split(1))?;
    for (v, e) in d.iter_mut().zip(&n.data) {
        *v += e;
    }
    clean.with_data(d, PixelDomain::BlackSubtracted)
}

/// Rounds a patch to whole DN in the black-subtracted domain, as a sensor
/// (or an LRF file) would store it.
pub fn round_to_dn(patch: &RawPatch) -> RawPatch {
    let d = patch.to_black_subtracted();
    let data = d.data().iter().map(|v| v.round()).collect();
    d.with_data(data, PixelDomain::BlackSubtracted)
        .expect("rounding keeps values in range")
}

/// Closed-form comparison models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Baseline {
    /// Signal-independent Gaussian, `N(0, sigma^2)`.
    Awgn { sigma: f64 },
    /// Exact shot noise plus `N(0, sigma_r^2)`.
    PoissonGaussian { sigma_r: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    Awgn,
    PoissonGaussian,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(Self::Awgn),
            "pg" | "poisson-gaussian" | "poissongaussian" => Ok(Self::PoissonGaussian),
            other => Err(Error::Parameter(format!("unknown noise model {other:?}"))),
        }
    }
}

impl Baseline {
    /// Parameters implied by a profile for one clean image. AWGN matches the
    /// total noise power: mean shot variance plus the signal-independent
    /// variance (oracle total when present, else `sigma_r^2`).
    pub fn from_profile(kind: BaselineKind, clean: &RawPatch, profile: &SensorProfile) -> Self {
        match kind {
            BaselineKind::Awgn => {
                let mean = clean.data().iter().sum::<f64>() / clean.len() as f64;
                let indep = profile
                    .oracle
                    .map(|o| o.total_variance())
                    .unwrap_or(profile.sigma_r * profile.sigma_r);
                Self::Awgn {
                    sigma: (profile.gain_k * mean + indep).sqrt(),
                }
            }
            BaselineKind::PoissonGaussian => Self::PoissonGaussian {
                sigma_r: profile.sigma_r,
            },
        }
    }
}

pub fn synthesize_baseline(
    clean: &RawPatch,
    profile: &SensorProfile,
    model: Baseline,
    rng: &RngStream,
) -> Result<RawPatch> {
    require_dn(clean, "synthesize_baseline")?;
    let (mut d, sigma) = match model {
        Baseline::Awgn { sigma } => (clean.data().to_vec(), sigma),
        Baseline::PoissonGaussian { sigma_r } => (
            shot_noise_values(clean.data(), profile.gain_k, &rng.split(0), DEFAULT_POISSON_SWITCH)?,
            sigma_r,
        ),
    };
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma > 0.0 {
        let mut g = rng.split(1).generator();
        for v in &mut d {
            *v += sigma * g.normal();
        }
    }
    clean.with_data(d, PixelDomain::BlackSubtracted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(value: f64, h: usize, w: usize) -> RawPatch {
        RawPatch::new(vec![value; 4 * h * w], h, w, 0, 60000, PixelDomain::BlackSubtracted).unwrap()
    }

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn zero_signal_gives_zero_shot_noise() {
        let y = flat(0.0, 8, 8);
        let out = sample_shot_noise(&y, 3.0, &RngStream::new(1)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shot_noise_is_integer_multiple_of_gain() {
        let data: Vec<f64> = (0..4 * 16 * 16).map(|i| (i % 97) as f64 * 0.7).collect();
        let y = RawPatch::new(data, 16, 16, 0, 60000, PixelDomain::BlackSubtracted).unwrap();
        let out = sample_shot_noise(&y, 2.0, &RngStream::new(2)).unwrap();
        for v in out.data() {
            assert!(*v >= 0.0 && (v / 2.0).fract() == 0.0, "{v}");
        }
    }

    #[test]
    fn shot_noise_errors() {
        assert!(matches!(shot_noise_values(&[1.0, -0.5], 1.0, &RngStream::new(0), 30.0), Err(Error::Domain(_))));
        assert!(matches!(shot_noise_values(&[1.0], 0.0, &RngStream::new(0), 30.0), Err(Error::Parameter(_))));
        let normalized = RawPatch::new(vec![0.5; 4], 1, 1, 0, 10, PixelDomain::Normalized).unwrap();
        assert!(matches!(sample_shot_noise(&normalized, 1.0, &RngStream::new(0)), Err(Error::State(_))));
    }

    #[test]
    fn shot_noise_moments() {
        // mean(Y_hat) = Y, var(Y_hat) = K * Y
        let y = flat(100.0, 500, 500);
        let out = sample_shot_noise(&y, 4.0, &RngStream::new(3)).unwrap();
        let (m, v) = moments(out.data());
        assert!((m - 100.0).abs() < 0.1, "mean {m}");
        assert!((v / 400.0 - 1.0).abs() < 0.02, "var {v}");
    }

    #[test]
    fn oracle_zero_params_is_zero_field() {
        let f = sample_oracle_indep(4, 4, &OracleNoiseParams::default(), &RngStream::new(0)).unwrap();
        assert!(f.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_rows_are_constant_without_read_noise() {
        let p = OracleNoiseParams::new(0.0, 3.0, 0.0).unwrap();
        let f = sample_oracle_indep(6, 5, &p, &RngStream::new(4)).unwrap();
        for row in f.data.chunks(5) {
            assert!(row.iter().all(|&v| v == row[0]));
        }
        assert!(f.data.chunks(5).any(|r| r[0] != f.data[0]));
    }

    #[test]
    fn oracle_variance_adds() {
        let p = OracleNoiseParams::new(1.0, 0.5, 0.0).unwrap();
        let f = sample_oracle_indep(500, 500, &p, &RngStream::new(5)).unwrap();
        let (m, v) = moments(&f.data);
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v / 1.25 - 1.0).abs() < 0.02, "var {v}");
    }

    #[test]
    fn oracle_quantization_lands_on_grid() {
        let p = OracleNoiseParams::new(2.0, 1.0, 0.5).unwrap();
        let f = sample_oracle_indep(8, 8, &p, &RngStream::new(6)).unwrap();
        assert!(f.data.iter().all(|v| (v / 0.5).fract() == 0.0));
    }

    #[test]
    fn physics_zero_signal_zero_noise() {
        let prof = SensorProfile::new(100, 2.0, 0.0)
            .unwrap()
            .with_oracle(OracleNoiseParams::default())
            .unwrap();
        let d = synthesize_physics(&flat(0.0, 4, 4), &prof, &RngStream::new(1)).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn physics_is_deterministic_and_needs_oracle() {
        let prof = SensorProfile::new(100, 2.0, 2.0)
            .unwrap()
            .with_oracle(OracleNoiseParams::new(2.0, 1.0, 1.0).unwrap())
            .unwrap();
        let y = flat(40.0, 8, 8);
        let a = synthesize_physics(&y, &prof, &RngStream::new(9)).unwrap();
        let b = synthesize_physics(&y, &prof, &RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        let c = synthesize_physics(&y, &prof, &RngStream::new(10)).unwrap();
        assert_ne!(a, c);
        let bare = SensorProfile::new(100, 2.0, 2.0).unwrap();
        assert!(matches!(synthesize_physics(&y, &bare, &RngStream::new(9)), Err(Error::Parameter(_))));
    }

    #[test]
    fn physics_moments() {
        let prof = SensorProfile::new(100, 4.0, 2.0)
            .unwrap()
            .with_oracle(OracleNoiseParams::new(2.0, 0.0, 0.0).unwrap())
            .unwrap();
        let d = synthesize_physics(&flat(100.0, 500, 500), &prof, &RngStream::new(12)).unwrap();
        let (m, v) = moments(d.data());
        assert!((m - 100.0).abs() < 0.1, "mean {m}");
        assert!((v / 404.0 - 1.0).abs() < 0.02, "var {v}");
    }

    #[test]
    fn baselines() {
        let y = flat(100.0, 500, 500);
        let prof = SensorProfile::new(100, 4.0, 3.0).unwrap();
        let rng = RngStream::new(13);

        let same = synthesize_baseline(&y, &prof, Baseline::Awgn { sigma: 0.0 }, &rng).unwrap();
        assert_eq!(same, y);

        let pg0 = synthesize_baseline(&y, &prof, Baseline::PoissonGaussian { sigma_r: 0.0 }, &rng).unwrap();
        let shot = sample_shot_noise(&y, 4.0, &rng.split(0)).unwrap();
        assert_eq!(pg0, shot);

        let pg = synthesize_baseline(&y, &prof, Baseline::from_profile(BaselineKind::PoissonGaussian, &y, &prof), &rng)
            .unwrap();
        let (_, v) = moments(pg.data());
        assert!((v / 409.0 - 1.0).abs() < 0.02, "var {v}");

        match Baseline::from_profile(BaselineKind::Awgn, &y, &prof) {
            Baseline::Awgn { sigma } => assert!((sigma * sigma - 409.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert!("gauss".parse::<BaselineKind>().is_err());
        assert_eq!("PG".parse::<BaselineKind>().unwrap(), BaselineKind::PoissonGaussian);
    }

    #[test]
    fn physics_residual_is_unbiased_away_from_clamp() {
        let prof = SensorProfile::new(100, 2.0, 2.0)
            .unwrap()
            .with_oracle(OracleNoiseParams::new(2.0, 1.0, 1.0).unwrap())
            .unwrap();
        let y = flat(200.0, 500, 500);
        let d = synthesize_physics(&y, &prof, &RngStream::new(14)).unwrap();
        let (m, _) = moments(d.data());
        // standard error of the mean ~ sqrt(405 / 1e6) ~ 0.02, plus row sharing
        assert!((m - 200.0).abs() < 0.1, "mean {m}");
    }
}
