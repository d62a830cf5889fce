use std::path::Path;

use super::{load_records, save_records, sample_init_noise, Generator, InitNoiseSpec, NetworkKind, Network, Record};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::raw::{PixelDomain, ProfileSet, RawPatch, SensorProfile};
use crate::sim::{round_to_dn, shot_noise_values, RngStream, DEFAULT_POISSON_SWITCH};

/// A trained generator together with the per-ISO profiles it was trained on.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    pub generator: Generator,
    pub profiles: ProfileSet,
}

impl NoiseModel {
    pub fn new(generator: Generator, profiles: ProfileSet) -> Self {
        Self { generator, profiles }
    }

    pub fn profile(&self, iso: u32) -> Result<&SensorProfile> {
        self.profiles.get(iso)
    }

    /// Inference: shot noise at the profile's gain (stream 0), an initial
    /// map at its `sigma_r` (stream 1), the generator, then
    /// `clamp(Y_hat + G(N_init))` rounded to whole DN. Output is black-subtracted.
    pub fn synthesize(&self, clean: &RawPatch, profile: &SensorProfile, rng: &RngStream) -> Result<RawPatch> {
        let dn = clean.to_black_subtracted();
        let range = dn.range();
        let shot = shot_noise_values(dn.data(), profile.gain_k, &rng.split(0), DEFAULT_POISSON_SWITCH)?;
        let spec = InitNoiseSpec {
            sigma_r: profile.sigma_r / range,
            height: dn.height(),
            width: dn.width(),
        };
        let n_init = sample_init_noise(&spec, &rng.split(1))?;
        let n = self.generator.generate(&n_init)?;
        if !n.is_finite() {
            return Err(Error::Divergence("generator produced non-finite noise".into()));
        }
        let data = shot.iter().zip(n.data()).map(|(s, e)| s + e * range).collect();
        Ok(round_to_dn(&dn.with_data(data, PixelDomain::BlackSubtracted)?))
    }

    /// Synthesis at a stored ISO.
    pub fn synthesize_iso(&self, clean: &RawPatch, iso: u32, rng: &RngStream) -> Result<RawPatch> {
        let p = *self.profile(iso)?;
        self.synthesize(clean, &p, rng)
    }

    /// The generator's signal-independent output for an explicit initial map.
    pub fn indep_noise(&self, n_init: &Tensor) -> Result<Tensor> {
        self.generator.generate(n_init)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_records(&[self.generator.to_record(self.profiles.to_text())], path)
    }

    /// Reads the first generator record of a checkpoint (other records,
    /// such as the critic, are ignored).
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(&load_records(path)?)
    }

    pub fn from_records(records: &[Record]) -> Result<Self> {
        let rec = records
            .iter()
            .find(|r| r.kind == NetworkKind::Generator)
            .ok_or_else(|| Error::Architecture("checkpoint holds no generator".into()))?;
        let generator = Generator::from_record(rec)?;
        let profiles = ProfileSet::parse(&rec.note, Path::new("<checkpoint note>"))?;
        Ok(Self { generator, profiles })
    }
}
