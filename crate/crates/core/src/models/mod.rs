//! The noise generator, the denoiser, the transformer critics and their
//! checkpoint format.

mod checkpoint;
mod critic;
mod noise_model;
mod unet;

use std::path::Path;

pub use checkpoint::{decode, encode, load_records, save_records, NetworkKind, Record, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use critic::{Critic, CriticConfig, CriticKind};
pub use noise_model::NoiseModel;
pub use unet::{UNet, UNetConfig, UNetOutput};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, ParamStore};
use crate::raw::{PixelDomain, RawPatch, CHANNELS};
use crate::sim::RngStream;

/// A network with parameters that can be saved and restored.
pub trait Network: Sized {
    fn kind(&self) -> NetworkKind;
    fn arch(&self) -> Vec<u64>;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Fresh network for a recorded architecture (weights to be loaded).
    fn from_arch(kind: NetworkKind, arch: &[u64]) -> Result<Self>;

    fn to_record(&self, note: impl Into<String>) -> Record {
        Record {
            kind: self.kind(),
            arch: self.arch(),
            weights: self.params().flatten(),
            note: note.into(),
        }
    }

    /// Builds the recorded network and loads its weights.
    fn from_record(rec: &Record) -> Result<Self> {
        let mut net = Self::from_arch(rec.kind, &rec.arch)?;
        net.params_mut().load_flat(&rec.weights)?;
        Ok(net)
    }

    /// Loads weights into this network, which must match the record.
    fn load_record(&mut self, rec: &Record) -> Result<()> {
        if rec.kind != self.kind() || rec.arch != self.arch() {
            return Err(Error::Architecture(format!(
                "checkpoint holds {:?} {:?}, network is {:?} {:?}",
                rec.kind,
                rec.arch,
                self.kind(),
                self.arch()
            )));
        }
        self.params_mut().load_flat(&rec.weights)
    }
}

/// Writes one network as a single-record checkpoint.
pub fn save_params<N: Network>(net: &N, path: &Path) -> Result<()> {
    save_records(&[net.to_record("")], path)
}

/// Loads the first record of `path` matching `N`'s kind into `net`.
pub fn load_params<N: Network>(net: &mut N, path: &Path) -> Result<()> {
    let recs = load_records(path)?;
    let rec = recs
        .iter()
        .find(|r| r.kind == net.kind())
        .ok_or_else(|| Error::Architecture(format!("{} holds no {:?} network", path.display(), net.kind())))?;
    net.load_record(rec)
}

fn unet_arch(c: &UNetConfig) -> Vec<u64> {
    vec![c.levels as u64, c.base_width as u64, CHANNELS as u64]
}

fn unet_from_arch(arch: &[u64]) -> Result<UNetConfig> {
    match arch {
        [l, w, c] if *c == CHANNELS as u64 => Ok(UNetConfig {
            levels: *l as usize,
            base_width: *w as usize,
        }),
        _ => Err(Error::Architecture(format!("bad u-net architecture block {arch:?}"))),
    }
}

/// Normalized level that the generator sees as 1. Noise maps are a few
/// thousandths of full scale; rescaling keeps Adam's per-step parameter
/// movement small relative to them.
pub const NOISE_UNIT: f64 = 0.01;

macro_rules! unet_network {
    ($name:ident, $kind:expr) => {
        #[derive(Clone, Debug)]
        pub struct $name {
            pub net: UNet,
            pub params: ParamStore,
        }

        impl $name {
            /// Random initialization from `rng`; the output convolution starts at zero.
            pub fn new(config: UNetConfig, rng: &RngStream) -> Result<Self> {
                let mut params = ParamStore::new();
                let net = UNet::build(&mut params, config, &mut rng.generator())?;
                Ok(Self { net, params })
            }

            pub fn config(&self) -> UNetConfig {
                self.net.config
            }
        }

        impl Network for $name {
            fn kind(&self) -> NetworkKind {
                $kind
            }

            fn arch(&self) -> Vec<u64> {
                unet_arch(&self.net.config)
            }

            fn params(&self) -> &ParamStore {
                &self.params
            }

            fn params_mut(&mut self) -> &mut ParamStore {
                &mut self.params
            }

            fn from_arch(kind: NetworkKind, arch: &[u64]) -> Result<Self> {
                if kind != $kind {
                    return Err(Error::Architecture(format!("expected {:?}, found {kind:?}", $kind)));
                }
                Self::new(unet_from_arch(arch)?, &RngStream::new(0))
            }
        }
    };
}

unet_network!(Generator, NetworkKind::Generator);
unet_network!(Denoiser, NetworkKind::Denoiser);

impl Generator {
    /// `N_indep = G(N_init)` for a batch `[B, 4, H, W]`. The network itself
    /// works in units of [`NOISE_UNIT`].
    pub fn forward(&self, g: &mut Graph, p: &Bound, n_init: Var) -> Result<Var> {
        let x = g.scale(n_init, 1.0 / NOISE_UNIT);
        let y = self.net.forward(g, p, x)?.output;
        Ok(g.scale(y, NOISE_UNIT))
    }

    /// Forward pass outside of training.
    pub fn generate(&self, n_init: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let shape = n_init.shape().to_vec();
        let x = if shape.len() == 3 {
            g.constant(n_init.clone().reshaped(&[1, shape[0], shape[1], shape[2]])?)
        } else {
            g.constant(n_init.clone())
        };
        let y = self.forward(&mut g, &p, x)?;
        g.value(y).clone().reshaped(&shape)
    }
}

impl Denoiser {
    /// Denoised batch plus feature taps (bottleneck, then each decoder level).
    pub fn forward(&self, g: &mut Graph, p: &Bound, noisy: Var) -> Result<UNetOutput> {
        self.net.forward(g, p, noisy)
    }

    /// Denoises one normalized patch; the estimate is clamped to `[0, 1]`.
    pub fn denoise(&self, noisy: &RawPatch) -> Result<RawPatch> {
        let x = patches_to_tensor(&[noisy.to_normalized()])?;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(x);
        let y = self.forward(&mut g, &p, xv)?.output;
        noisy.to_normalized().with_data(g.value(y).data().to_vec(), PixelDomain::Normalized)
    }
}

/// Critic wrapper owning its parameters.
#[derive(Clone, Debug)]
pub struct NoiseCritic {
    pub net: Critic,
    pub params: ParamStore,
}

impl NoiseCritic {
    pub fn new(config: CriticConfig, rng: &RngStream) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = Critic::build(&mut params, config, &mut rng.generator())?;
        Ok(Self { net, params })
    }

    pub fn config(&self) -> CriticConfig {
        self.net.config
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        self.net.forward(g, p, x)
    }

    /// Scores of a batch outside of training.
    pub fn score(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let s = self.forward(&mut g, &p, xv)?;
        Ok(g.value(s).data().to_vec())
    }
}

impl Network for NoiseCritic {
    fn kind(&self) -> NetworkKind {
        match self.net.config.kind {
            CriticKind::Fourier => NetworkKind::FourierCritic,
            CriticKind::Vanilla => NetworkKind::VanillaCritic,
        }
    }

    fn arch(&self) -> Vec<u64> {
        let c = &self.net.config;
        let mut a = vec![c.image_size as u64];
        a.extend(c.patch_sizes.map(|p| p as u64));
        a.extend([c.dim as u64, c.heads as u64, c.ff_ratio as u64]);
        a
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn from_arch(kind: NetworkKind, arch: &[u64]) -> Result<Self> {
        let kind = match kind {
            NetworkKind::FourierCritic => CriticKind::Fourier,
            NetworkKind::VanillaCritic => CriticKind::Vanilla,
            other => return Err(Error::Architecture(format!("expected a critic, found {other:?}"))),
        };
        let &[s, p1, p2, p3, d, h, f] = arch else {
            return Err(Error::Architecture(format!("bad critic architecture block {arch:?}")));
        };
        let u = |v: u64| v as usize;
        let config = CriticConfig {
            kind,
            image_size: u(s),
            patch_sizes: [u(p1), u(p2), u(p3)],
            dim: u(d),
            heads: u(h),
            ff_ratio: u(f),
        };
        Self::new(config, &RngStream::new(0))
    }
}

/// Size and level of the initial noise map for one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitNoiseSpec {
    /// Standard deviation in the units of the generator's output.
    pub sigma_r: f64,
    pub height: usize,
    pub width: usize,
}

/// Per-pixel, per-channel iid `Normal(0, sigma_r^2)` map `[4, H, W]`.
pub fn sample_init_noise(spec: &InitNoiseSpec, rng: &RngStream) -> Result<Tensor> {
    if !(spec.sigma_r >= 0.0 && spec.sigma_r.is_finite()) {
        return Err(Error::Parameter(format!("sigma_r must be >= 0, got {}", spec.sigma_r)));
    }
    let shape = [CHANNELS, spec.height, spec.width];
    if spec.sigma_r == 0.0 {
        return Tensor::new(&shape, vec![0.0; CHANNELS * spec.height * spec.width]);
    }
    let mut s = rng.generator();
    Ok(Tensor::from_fn(&shape, |_| spec.sigma_r * s.normal()))
}

/// `clamp(y_hat + n_indep, 0, 1)` in normalized units.
pub fn compose_noisy(y_hat: &RawPatch, n_indep: &Tensor) -> Result<RawPatch> {
    if !y_hat.is_normalized() {
        return Err(Error::State("compose_noisy needs a normalized patch".into()));
    }
    let want = [CHANNELS, y_hat.height(), y_hat.width()];
    if n_indep.numel() != y_hat.len() || (n_indep.shape() != want && n_indep.shape() != [1, want[0], want[1], want[2]]) {
        return Err(Error::dim(format!("compose_noisy: patch {want:?} vs noise {:?}", n_indep.shape())));
    }
    let data = y_hat.data().iter().zip(n_indep.data()).map(|(a, b)| a + b).collect();
    y_hat.with_data(data, PixelDomain::Normalized)
}

/// Stacks equally sized patches (in their current domain) into `[B, 4, H, W]`.
pub fn patches_to_tensor(patches: &[RawPatch]) -> Result<Tensor> {
    let first = patches.first().ok_or_else(|| Error::InsufficientData("empty batch".into()))?;
    let mut data = Vec::with_capacity(patches.len() * first.len());
    for p in patches {
        first.check_same_shape(p, "batch")?;
        data.extend_from_slice(p.data());
    }
    Tensor::new(&[patches.len(), CHANNELS, first.height(), first.width()], data)
}
