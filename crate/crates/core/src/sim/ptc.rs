//! Photon-transfer-curve calibration and moment fits of baseline models.

use crate::error::{Error, Result};
use crate::raw::{PixelDomain, RawPatch};

/// Frames captured at one exposure level.
#[derive(Clone, Debug)]
pub struct ExposureLevel {
    pub frames: Vec<RawPatch>,
}

impl ExposureLevel {
    pub fn new(frames: Vec<RawPatch>) -> Self {
        Self { frames }
    }
}

/// Least-squares fit of `var(D) = K * mean(D) + sigma_r^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PtcFit {
    pub gain_k: f64,
    pub sigma_r: f64,
    pub intercept: f64,
    /// Set when the intercept came out negative and `sigma_r` was forced to 0.
    pub negative_intercept: bool,
    /// `(mean signal, temporal variance)` per level, dark level first if given.
    pub points: Vec<(f64, f64)>,
}

fn pedestal(frame: &RawPatch) -> f64 {
    match frame.domain() {
        PixelDomain::Raw => f64::from(frame.black_level()),
        _ => 0.0,
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean level and temporal variance of one exposure. Variance comes from
/// frame pairs, `var(F_a - F_b) / 2`, which cancels fixed scene structure.
fn level_point(level: &ExposureLevel, offset: Option<f64>) -> Result<(f64, f64)> {
    let frames = &level.frames;
    if frames.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "each exposure level needs >= 2 frames, got {}",
            frames.len()
        )));
    }
    for f in &frames[1..] {
        frames[0].check_same_shape(f, "calibrate_ptc")?;
    }
    let offset = offset.unwrap_or_else(|| pedestal(&frames[0]));
    let level_mean = frames.iter().map(|f| mean(f.data())).sum::<f64>() / frames.len() as f64 - offset;
    let mut var_sum = 0.0;
    let pairs = frames.len() / 2;
    for p in 0..pairs {
        let (a, b) = (frames[2 * p].data(), frames[2 * p + 1].data());
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let m = mean(&diff);
        let v = diff.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (diff.len() as f64 - 1.0);
        var_sum += v / 2.0;
    }
    Ok((level_mean, var_sum / pairs as f64))
}

/// Estimates gain and signal-independent noise from flat frames at three
/// or more exposure levels. Dark frames, when given (two or more), set the
/// signal offset and contribute a zero-signal point to the regression.
pub fn calibrate_ptc(flat_levels: &[ExposureLevel], dark_frames: &[RawPatch]) -> Result<PtcFit> {
    if flat_levels.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "photon transfer fit needs >= 3 exposure levels, got {}",
            flat_levels.len()
        )));
    }
    let mut points = Vec::with_capacity(flat_levels.len() + 1);
    let mut offset = None;
    if dark_frames.len() >= 2 {
        let dark = ExposureLevel::new(dark_frames.to_vec());
        let (dark_mean, dark_var) = level_point(&dark, None)?;
        offset = Some(dark_mean + pedestal(&dark_frames[0]));
        points.push((0.0, dark_var));
    } else if dark_frames.len() == 1 {
        offset = Some(mean(dark_frames[0].data()));
    }
    for level in flat_levels {
        points.push(level_point(level, offset)?);
    }

    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let negative_intercept = intercept < 0.0;
    Ok(PtcFit {
        gain_k: slope,
        sigma_r: intercept.max(0.0).sqrt(),
        intercept,
        negative_intercept,
        points,
    })
}

/// Moment fit of the AWGN baseline: `sigma^2 = E[(D - Y)^2]` over all pairs.
/// Inputs are `(clean, noisy)` in black-subtracted DN.
pub fn fit_awgn_sigma(pairs: &[(RawPatch, RawPatch)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pairs to fit".into()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (clean, noisy) in pairs {
        clean.check_same_shape(noisy, "fit_awgn_sigma")?;
        let (c, d) = (clean.to_black_subtracted(), noisy.to_black_subtracted());
        sum += c.data().iter().zip(d.data()).map(|(y, x)| (x - y).powi(2)).sum::<f64>();
        count += c.len();
    }
    Ok((sum / count as f64).sqrt())
}

/// Moment fit of the Poisson-Gaussian read term given the gain:
/// `sigma_r^2 = E[(D - Y)^2] - K * E[Y]`, floored at zero.
pub fn fit_pg_sigma_r(pairs: &[(RawPatch, RawPatch)], gain_k: f64) -> Result<f64> {
    let awgn = fit_awgn_sigma(pairs)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (clean, _) in pairs {
        let c = clean.to_black_subtracted();
        sum += c.data().iter().sum::<f64>();
        count += c.len();
    }
    Ok((awgn * awgn - gain_k * sum / count as f64).max(0.0).sqrt())
}
