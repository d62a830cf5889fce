//! Residual histograms, KL divergence, AKLD, PSNR and SSIM.

use crate::error::{Error, Result};
use crate::raw::{RawPatch, CHANNELS};
use crate::sim::RngStream;

pub const DEFAULT_BINS: usize = 256;
pub const DEFAULT_RANGE: (f64, f64) = (-0.5, 0.5);
/// Additive smoothing applied to every bin before normalization.
pub const KLD_SMOOTHING: f64 = 1.0;
pub const PSNR_CAP_DB: f64 = 100.0;

/// Uniformly binned counts; values outside the range land in the edge bins.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseHistogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
    total: u64,
}

impl NoiseHistogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Parameter(format!("histogram needs >= 2 bins and lo < hi, got {bins} on [{lo}, {hi}]")));
        }
        Ok(Self {
            lo,
            hi,
            counts: vec![0; bins],
            total: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn edges(&self) -> Vec<f64> {
        let b = self.bins();
        (0..=b).map(|i| self.lo + (self.hi - self.lo) * i as f64 / b as f64).collect()
    }

    pub fn bin_of(&self, v: f64) -> usize {
        let b = self.bins();
        let t = (v - self.lo) / (self.hi - self.lo) * b as f64;
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(b - 1)
        }
    }

    pub fn add(&mut self, v: f64) {
        let i = self.bin_of(v);
        self.counts[i] += 1;
        self.total += 1;
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.add(v);
        }
    }

    fn same_binning(&self, other: &Self) -> bool {
        self.bins() == other.bins() && self.lo == other.lo && self.hi == other.hi
    }

    /// Smoothed bin probabilities.
    pub fn probabilities(&self, alpha: f64) -> Vec<f64> {
        let denom = self.total as f64 + alpha * self.bins() as f64;
        self.counts.iter().map(|&c| (c as f64 + alpha) / denom).collect()
    }
}

/// Histogram of `noisy - clean` in normalized units.
pub fn noise_histogram(noisy: &RawPatch, clean: &RawPatch, bins: usize, range: (f64, f64)) -> Result<NoiseHistogram> {
    noisy.check_same_shape(clean, "noise_histogram")?;
    let (n, c) = (noisy.to_normalized(), clean.to_normalized());
    let mut h = NoiseHistogram::new(bins, range.0, range.1)?;
    h.extend(n.data().iter().zip(c.data()).map(|(a, b)| a - b));
    Ok(h)
}

/// `sum p log(p / q)` over smoothed bin probabilities.
pub fn kld(p: &NoiseHistogram, q: &NoiseHistogram) -> Result<f64> {
    if !p.same_binning(q) {
        return Err(Error::dim("kld: histograms have different bin edges"));
    }
    let (pp, qq) = (p.probabilities(KLD_SMOOTHING), q.probabilities(KLD_SMOOTHING));
    Ok(pp
        .iter()
        .zip(&qq)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0))
}

/// Per-comparison KLDs and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct AkldReport {
    /// Mean over the `M` samples of each image, in dataset order.
    pub per_image: Vec<f64>,
    pub mean: f64,
}

/// Average KLD between synthetic and real residual histograms.
///
/// For every `(clean, real_noisy)` pair, `synth(clean, image_index, rng)` is
/// called `m` times with distinct streams; each synthetic residual histogram
/// is compared with the real one as `kld(synthetic, real)`.
pub fn akld<F>(pairs: &[(RawPatch, RawPatch)], m: usize, rng: &RngStream, mut synth: F) -> Result<AkldReport>
where
    F: FnMut(&RawPatch, usize, &RngStream) -> Result<RawPatch>,
{
    if pairs.is_empty() || m == 0 {
        return Err(Error::InsufficientData("akld needs at least one pair and one sample".into()));
    }
    let mut per_image = Vec::with_capacity(pairs.len());
    for (i, (clean, real)) in pairs.iter().enumerate() {
        let hr = noise_histogram(real, clean, DEFAULT_BINS, DEFAULT_RANGE)?;
        let img_rng = rng.split(i as u64);
        let mut sum = 0.0;
        for s in 0..m {
            let fake = synth(clean, i, &img_rng.split(s as u64))?;
            let hf = noise_histogram(&fake, clean, DEFAULT_BINS, DEFAULT_RANGE)?;
            sum += kld(&hf, &hr)?;
        }
        per_image.push(sum / m as f64);
    }
    let mean = per_image.iter().sum::<f64>() / per_image.len() as f64;
    Ok(AkldReport { per_image, mean })
}

fn check_pair(a: &RawPatch, b: &RawPatch, op: &str) -> Result<(RawPatch, RawPatch)> {
    a.check_same_shape(b, op)?;
    Ok((a.to_normalized(), b.to_normalized()))
}

/// `10 log10(1 / MSE)` on normalized values, capped at 100 dB.
pub fn psnr(a: &RawPatch, b: &RawPatch) -> Result<f64> {
    let (a, b) = check_pair(a, b, "psnr")?;
    Ok(psnr_values(a.data(), b.data()))
}

pub(crate) fn psnr_values(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse < 1e-10 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable valid-mode Gaussian filter of one `h x w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ho, wo) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * wo];
    for y in 0..h {
        for xo in 0..wo {
            rows[y * wo + xo] = (0..SSIM_WINDOW).map(|j| k[j] * x[y * w + xo + j]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for yo in 0..ho {
        for xo in 0..wo {
            out[yo * wo + xo] = (0..SSIM_WINDOW).map(|j| k[j] * rows[(yo + j) * wo + xo]).sum();
        }
    }
    out
}

/// Mean local SSIM over all channels and valid 11x11 windows.
pub fn ssim(a: &RawPatch, b: &RawPatch) -> Result<f64> {
    let (a, b) = check_pair(a, b, "ssim")?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} planes, got {h}x{w}")));
    }
    let k = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..CHANNELS {
        let (x, y) = (a.channel(c), b.channel(c));
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter_valid(x, h, w, &k), filter_valid(y, h, w, &k));
        let (sxx, syy, sxy) = (filter_valid(&xx, h, w, &k), filter_valid(&yy, h, w, &k), filter_valid(&xy, h, w, &k));
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
