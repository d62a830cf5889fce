use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::{sample_init_noise, InitNoiseSpec};
use crate::raw::{PixelDomain, ProfileSet, RawPatch, SensorProfile, CHANNELS};
use crate::sim::{
    procedural_scene, round_to_dn, shot_noise_values, synthesize_physics, RngStream, SceneSpec, DEFAULT_POISSON_SWITCH,
};

/// A clean image, its real noisy capture and the capture's noise profile.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainPair {
    pub clean: RawPatch,
    pub noisy: RawPatch,
    pub profile: SensorProfile,
}

impl TrainPair {
    pub fn new(clean: RawPatch, noisy: RawPatch, profile: SensorProfile) -> Result<Self> {
        clean.check_same_shape(&noisy, "training pair")?;
        profile.validate()?;
        Ok(Self { clean, noisy, profile })
    }

    pub fn as_tuple(&self) -> (RawPatch, RawPatch) {
        (self.clean.clone(), self.noisy.clone())
    }
}

/// Distinct profiles of a dataset; one ISO must not carry two different profiles.
pub fn collect_profiles(pairs: &[TrainPair]) -> Result<ProfileSet> {
    let mut set = ProfileSet::new();
    for p in pairs {
        match set.get(p.profile.iso) {
            Ok(existing) if *existing == p.profile => {}
            Ok(existing) => {
                return Err(Error::Parameter(format!(
                    "ISO {} appears with two profiles: {existing:?} and {:?}",
                    p.profile.iso, p.profile
                )))
            }
            Err(_) => set.insert(p.profile)?,
        }
    }
    Ok(set)
}

/// `size x size` window of every channel starting at `(y, x)`.
pub fn crop(p: &RawPatch, y: usize, x: usize, size: usize) -> Result<RawPatch> {
    if y + size > p.height() || x + size > p.width() {
        return Err(Error::dim(format!(
            "crop {size}x{size} at ({y}, {x}) exceeds {}x{}",
            p.height(),
            p.width()
        )));
    }
    let mut data = Vec::with_capacity(CHANNELS * size * size);
    for c in 0..CHANNELS {
        let plane = p.channel(c);
        for r in y..y + size {
            data.extend_from_slice(&plane[r * p.width() + x..r * p.width() + x + size]);
        }
    }
    RawPatch::new(data, size, size, p.black_level(), p.white_level(), p.domain())
}

/// One assembled mini-batch in normalized units.
pub(crate) struct Batch {
    /// Clean crops in black-subtracted DN, one per image.
    pub clean_dn: Vec<RawPatch>,
    pub clean: Tensor,
    pub noisy: Tensor,
    pub profiles: Vec<SensorProfile>,
}

/// Crops `patch x patch` windows (random offsets from `rng`) of the pairs at `indices`.
pub(crate) fn assemble(pairs: &[TrainPair], indices: &[usize], patch: usize, rng: &RngStream) -> Result<Batch> {
    let mut s = rng.generator();
    let mut clean_dn = Vec::with_capacity(indices.len());
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    let mut profiles = Vec::with_capacity(indices.len());
    for &i in indices {
        let p = &pairs[i];
        if p.clean.height() < patch || p.clean.width() < patch {
            return Err(Error::dim(format!(
                "pair {i} is {}x{}, smaller than the {patch}x{patch} training patch",
                p.clean.height(),
                p.clean.width()
            )));
        }
        let y = s.below(p.clean.height() - patch + 1);
        let x = s.below(p.clean.width() - patch + 1);
        let c = crop(&p.clean, y, x, patch)?;
        let n = crop(&p.noisy, y, x, patch)?;
        clean.extend_from_slice(c.to_normalized().data());
        noisy.extend_from_slice(n.to_normalized().data());
        clean_dn.push(c.to_black_subtracted());
        profiles.push(p.profile);
    }
    let shape = [indices.len(), CHANNELS, patch, patch];
    Ok(Batch {
        clean_dn,
        clean: Tensor::new(&shape, clean)?,
        noisy: Tensor::new(&shape, noisy)?,
        profiles,
    })
}

/// Unclamped shot-noise image `Poisson(Y/K) K` in normalized units.
pub(crate) fn shot_normalized(clean_dn: &RawPatch, gain_k: f64, rng: &RngStream) -> Result<Vec<f64>> {
    debug_assert_eq!(clean_dn.domain(), PixelDomain::BlackSubtracted);
    let range = clean_dn.range();
    Ok(shot_noise_values(clean_dn.data(), gain_k, rng, DEFAULT_POISSON_SWITCH)?
        .into_iter()
        .map(|v| v / range)
        .collect())
}

/// Per-image shot-noise images and initial noise maps for a batch, both
/// `[B, 4, H, W]` in normalized units. Image `i` draws shot noise from
/// `rng.split(i).split(0)` and its map from `rng.split(i).split(1)`, the
/// same streams inference uses.
pub(crate) fn noise_inputs(batch: &Batch, rng: &RngStream) -> Result<(Tensor, Tensor)> {
    let first = batch
        .clean_dn
        .first()
        .ok_or_else(|| Error::InsufficientData("empty batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut shot = Vec::with_capacity(batch.clean_dn.len() * first.len());
    let mut init = Vec::with_capacity(shot.capacity());
    for (i, (clean, profile)) in batch.clean_dn.iter().zip(&batch.profiles).enumerate() {
        let r = rng.split(i as u64);
        shot.extend(shot_normalized(clean, profile.gain_k, &r.split(0))?);
        let spec = InitNoiseSpec {
            sigma_r: profile.sigma_r / clean.range(),
            height: h,
            width: w,
        };
        init.extend_from_slice(sample_init_noise(&spec, &r.split(1))?.data());
    }
    let shape = [batch.clean_dn.len(), CHANNELS, h, w];
    Ok((Tensor::new(&shape, shot)?, Tensor::new(&shape, init)?))
}

/// Centre `size x size` crops of the pairs, for validation.
pub(crate) fn centre_crops(pairs: &[TrainPair], size: usize) -> Result<Vec<TrainPair>> {
    pairs
        .iter()
        .map(|p| {
            if p.clean.height() < size || p.clean.width() < size {
                return Err(Error::dim(format!(
                    "validation pair is {}x{}, smaller than {size}x{size}",
                    p.clean.height(),
                    p.clean.width()
                )));
            }
            let (y, x) = ((p.clean.height() - size) / 2, (p.clean.width() - size) / 2);
            TrainPair::new(crop(&p.clean, y, x, size)?, crop(&p.noisy, y, x, size)?, p.profile)
        })
        .collect()
}

/// Splits off the last `ceil(n * fraction)` pairs (at least one when
/// `fraction > 0` and at least two pairs exist) as the validation set.
pub fn split_validation(pairs: Vec<TrainPair>, fraction: f64) -> (Vec<TrainPair>, Vec<TrainPair>) {
    let n = pairs.len();
    let mut n_val = (n as f64 * fraction).ceil() as usize;
    if fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    } else {
        n_val = 0;
    }
    let mut train = pairs;
    let val = train.split_off(n - n_val);
    (train, val)
}

/// Clean procedural scenes with peaks drawn uniformly from `peaks` and
/// their oracle-sensor captures. Scene `i` uses `rng.split(i).split(0)`,
/// its capture `rng.split(i).split(1)`.
pub fn simulate_pairs(
    scene: &SceneSpec,
    peaks: (f64, f64),
    profile: &SensorProfile,
    n: usize,
    rng: &RngStream,
) -> Result<Vec<TrainPair>> {
    (0..n as u64)
        .map(|i| {
            let r = rng.split(i);
            let peak = peaks.0 + (peaks.1 - peaks.0) * r.split(2).generator().uniform();
            let clean = procedural_scene(&SceneSpec { peak, ..*scene }, &r.split(0))?;
            let noisy = synthesize_physics(&clean, profile, &r.split(1))?;
            TrainPair::new(clean, round_to_dn(&noisy), *profile)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(h: usize, w: usize, iso: u32) -> TrainPair {
        let clean = RawPatch::new((0..4 * h * w).map(|i| (i % 50) as f64).collect(), h, w, 0, 1023, PixelDomain::BlackSubtracted).unwrap();
        let noisy = clean.with_data(clean.data().iter().map(|v| v + 1.0).collect(), PixelDomain::BlackSubtracted).unwrap();
        TrainPair::new(clean, noisy, SensorProfile::new(iso, 2.0, 2.0).unwrap()).unwrap()
    }

    #[test]
    fn crop_picks_the_window() {
        let p = pair(4, 5, 100);
        let c = crop(&p.clean, 1, 2, 2).unwrap();
        assert_eq!(c.channel(0), &[7.0, 8.0, 12.0, 13.0]);
        assert_eq!(c.channel(1), &[27.0, 28.0, 32.0, 33.0]);
        assert!(crop(&p.clean, 3, 0, 2).is_err());
    }

    #[test]
    fn validation_split_sizes() {
        let pairs: Vec<_> = (0..8).map(|_| pair(2, 2, 100)).collect();
        let (t, v) = split_validation(pairs.clone(), 0.125);
        assert_eq!((t.len(), v.len()), (7, 1));
        let (t, v) = split_validation(pairs.clone(), 0.0);
        assert_eq!((t.len(), v.len()), (8, 0));
        let (t, v) = split_validation(pairs[..1].to_vec(), 0.5);
        assert_eq!((t.len(), v.len()), (1, 0));
    }

    #[test]
    fn conflicting_profiles_rejected() {
        let a = pair(2, 2, 100);
        let mut b = pair(2, 2, 100);
        assert_eq!(collect_profiles(&[a.clone(), b.clone()]).unwrap().len(), 1);
        b.profile.sigma_r = 3.0;
        assert!(collect_profiles(&[a, b]).is_err());
    }

    #[test]
    fn batch_streams_match_per_image_streams() {
        let pairs = vec![pair(4, 4, 100), pair(4, 4, 100)];
        let rng = RngStream::new(5);
        let b = assemble(&pairs, &[0, 1], 4, &rng).unwrap();
        let (shot, init) = noise_inputs(&b, &rng).unwrap();
        let one = shot_normalized(&b.clean_dn[1], 2.0, &rng.split(1).split(0)).unwrap();
        assert_eq!(&shot.data()[64..], &one[..]);
        assert!(init.data().iter().all(|v| v.is_finite()));
    }
}
