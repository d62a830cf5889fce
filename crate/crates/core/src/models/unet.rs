use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv, ParamStore, ResConvBlock, UpConv};
use crate::raw::CHANNELS;
use crate::sim::Sampler;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UNetConfig {
    pub levels: usize,
    pub base_width: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            base_width: 16,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 6 || self.base_width == 0 {
            return Err(Error::Parameter(format!(
                "u-net needs 1..=6 levels and a positive width, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Width at encoder level `l` (`l == levels` is the bottleneck).
    pub fn width(&self, l: usize) -> usize {
        self.base_width << l
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let m = 1 << self.levels;
        if !h.is_multiple_of(m) || !w.is_multiple_of(m) {
            return Err(Error::dim(format!(
                "u-net with {} levels needs sides divisible by {m}, got {h}x{w}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Residual U-shape network on 4-channel images with a zero-initialized
/// output convolution added to the input, so a fresh network is the identity.
#[derive(Clone, Debug)]
pub struct UNet {
    pub config: UNetConfig,
    enc: Vec<ResConvBlock>,
    down: Vec<Conv>,
    bottleneck: ResConvBlock,
    up: Vec<UpConv>,
    dec: Vec<ResConvBlock>,
    head: Conv,
}

/// Output plus the bottleneck and decoder activations, coarse to fine.
pub struct UNetOutput {
    pub output: Var,
    pub taps: Vec<Var>,
}

impl UNet {
    pub fn build(ps: &mut ParamStore, config: UNetConfig, rng: &mut Sampler) -> Result<Self> {
        config.validate()?;
        let l = config.levels;
        let mut enc = Vec::with_capacity(l);
        let mut down = Vec::with_capacity(l);
        enc.push(ResConvBlock::new(ps, "enc0", CHANNELS, config.width(0), rng));
        for i in 1..=l {
            down.push(Conv::new(ps, &format!("down{i}"), config.width(i - 1), config.width(i), 3, 2, rng));
            if i < l {
                enc.push(ResConvBlock::new(ps, &format!("enc{i}"), config.width(i), config.width(i), rng));
            }
        }
        let bottleneck = ResConvBlock::new(ps, "bottleneck", config.width(l), config.width(l), rng);
        let mut up = Vec::with_capacity(l);
        let mut dec = Vec::with_capacity(l);
        for i in (0..l).rev() {
            up.push(UpConv::new(ps, &format!("up{i}"), config.width(i + 1), config.width(i), rng));
            dec.push(ResConvBlock::new(ps, &format!("dec{i}"), 2 * config.width(i), config.width(i), rng));
        }
        let head = Conv::zero(ps, "head", config.width(0), CHANNELS, 3);
        Ok(Self { config, enc, down, bottleneck, up, dec, head })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<UNetOutput> {
        let s = g.shape(x).to_vec();
        if s.len() != 4 || s[1] != CHANNELS {
            return Err(Error::dim(format!("u-net input must be [batch, 4, H, W], got {s:?}")));
        }
        self.config.check_input(s[2], s[3])?;
        let mut skips = Vec::with_capacity(self.config.levels);
        let mut h = self.enc[0].forward(g, p, x)?;
        for (i, d) in self.down.iter().enumerate() {
            skips.push(h);
            h = d.forward(g, p, h)?;
            h = if i + 1 < self.config.levels {
                self.enc[i + 1].forward(g, p, h)?
            } else {
                self.bottleneck.forward(g, p, h)?
            };
        }
        let mut taps = vec![h];
        for (u, d) in self.up.iter().zip(&self.dec) {
            let up = u.forward(g, p, h)?;
            let up = g.leaky_relu(up, crate::nn::LEAKY_SLOPE);
            let skip = skips.pop().expect("one skip per level");
            let cat = g.concat(&[up, skip], 1)?;
            h = d.forward(g, p, cat)?;
            taps.push(h);
        }
        let r = self.head.forward(g, p, h)?;
        Ok(UNetOutput {
            output: g.add(x, r)?,
            taps,
        })
    }
}
