//! Procedural clean scenes for simulation experiments.

use super::RngStream;
use crate::error::{Error, Result};
use crate::raw::{PixelDomain, RawPatch, CHANNELS};

/// Layout and level of procedural scenes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    /// Brightest value in black-subtracted DN.
    pub peak: f64,
    pub black_level: u16,
    pub white_level: u16,
}

/// A smooth illumination gradient, a few flat rectangles and discs, and a
/// sinusoidal texture, with per-channel colour gains. Values are whole DN
/// in `[0, peak]`, black-subtracted.
pub fn procedural_scene(spec: &SceneSpec, rng: &RngStream) -> Result<RawPatch> {
    let range = f64::from(spec.white_level) - f64::from(spec.black_level);
    if !(spec.peak > 0.0 && spec.peak <= range) || spec.height == 0 || spec.width == 0 {
        return Err(Error::Parameter(format!("bad scene spec {spec:?}")));
    }
    let (h, w) = (spec.height, spec.width);
    let mut g = rng.generator();
    let (gy, gx, g0) = (g.uniform() - 0.5, g.uniform() - 0.5, 0.2 + 0.3 * g.uniform());
    let mut base: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
            g0 + 0.4 * (gy * y + gx * x)
        })
        .collect();
    for _ in 0..1 + g.below(4) {
        let level = g.uniform();
        let (cy, cx) = (g.uniform() * h as f64, g.uniform() * w as f64);
        let r = (0.1 + 0.3 * g.uniform()) * h.min(w) as f64;
        let disc = g.uniform() < 0.5;
        for (i, v) in base.iter_mut().enumerate() {
            let (dy, dx) = ((i / w) as f64 - cy, (i % w) as f64 - cx);
            let inside = if disc {
                dy * dy + dx * dx <= r * r
            } else {
                dy.abs() <= r && dx.abs() <= 0.7 * r
            };
            if inside {
                *v = level;
            }
        }
    }
    let (fy, fx, phase, amp) = (g.uniform() * 0.8, g.uniform() * 0.8, g.uniform() * 6.3, 0.1 * g.uniform());
    for (i, v) in base.iter_mut().enumerate() {
        let (y, x) = ((i / w) as f64, (i % w) as f64);
        *v = (*v + amp * (fy * y + fx * x + phase).sin()).clamp(0.0, 1.0);
    }
    let gains = [0.5 + 0.5 * g.uniform(), 1.0, 1.0, 0.5 + 0.5 * g.uniform()];
    let mut data = Vec::with_capacity(CHANNELS * h * w);
    for gain in gains {
        data.extend(base.iter().map(|v| (v * gain * spec.peak).round()));
    }
    RawPatch::new(data, h, w, spec.black_level, spec.white_level, PixelDomain::BlackSubtracted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SceneSpec {
        SceneSpec {
            height: 32,
            width: 32,
            peak: 60.0,
            black_level: 64,
            white_level: 1023,
        }
    }

    #[test]
    fn scenes_are_integer_bounded_and_seeded() {
        let a = procedural_scene(&spec(), &RngStream::new(1)).unwrap();
        assert!(a.data().iter().all(|v| v.fract() == 0.0 && (0.0..=60.0).contains(v)));
        assert_eq!(a, procedural_scene(&spec(), &RngStream::new(1)).unwrap());
        assert_ne!(a, procedural_scene(&spec(), &RngStream::new(2)).unwrap());
        let green: Vec<f64> = a.channel(1).to_vec();
        assert_eq!(green, a.channel(2));
    }

    #[test]
    fn bad_peak_rejected() {
        let s = SceneSpec { peak: 2000.0, ..spec() };
        assert!(procedural_scene(&s, &RngStream::new(1)).is_err());
    }
}
