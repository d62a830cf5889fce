use super::layers::{LayerNorm, Linear, TRANSFORMER_INIT_STD};
use super::params::{Bound, ParamStore};
use super::tokens::TokenSequence;
use crate::autodiff::{dft2, idft2, Graph, Var};
use crate::error::{Error, Result};
use crate::sim::Sampler;

/// Multi-head self-attention.
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl Attention {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut Sampler) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::dim(format!("attention: dim {dim} not divisible by {heads} heads")));
        }
        let mut lin = |n: &str| Linear::new(ps, &format!("{name}.{n}"), dim, dim, TRANSFORMER_INIT_STD, rng);
        Ok(Self {
            q: lin("q"),
            k: lin("k"),
            v: lin("v"),
            out: lin("out"),
            heads,
            dim,
        })
    }

    fn split_heads(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (b, l) = (s[0], s[1]);
        let r = g.reshape(x, &[b, l, self.heads, self.dim / self.heads])?;
        g.permute(r, &[0, 2, 1, 3])
    }

    /// Attention probabilities `[batch, heads, L, L]` and the projected values.
    fn probs_and_values(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<(Var, Var)> {
        let q = self.q.forward(g, p, x)?;
        let k = self.k.forward(g, p, x)?;
        let v = self.v.forward(g, p, x)?;
        let (q, k, v) = (self.split_heads(g, q)?, self.split_heads(g, k)?, self.split_heads(g, v)?);
        let scores = g.matmul_nt(q, k)?;
        let scores = g.scale(scores, 1.0 / ((self.dim / self.heads) as f64).sqrt());
        Ok((g.softmax(scores), v))
    }

    /// Attention probabilities for inspection.
    pub fn probabilities(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        Ok(self.probs_and_values(g, p, x)?.0)
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[2] != self.dim {
            return Err(Error::dim(format!("attention: expected [batch, L, {}], got {s:?}", self.dim)));
        }
        let (a, v) = self.probs_and_values(g, p, x)?;
        let ctx = g.matmul(a, v)?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &s)?;
        self.out.forward(g, p, ctx)
    }
}

/// Pre-norm transformer block: attention and feed-forward, each residual.
#[derive(Clone, Debug)]
pub struct VanillaBlock {
    pub norm1: LayerNorm,
    pub attn: Attention,
    pub norm2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub dim: usize,
}

impl VanillaBlock {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, ff_ratio: usize, rng: &mut Sampler) -> Result<Self> {
        let norm1 = LayerNorm::new(ps, &format!("{name}.norm1"), dim);
        let attn = Attention::new(ps, &format!("{name}.attn"), dim, heads, rng)?;
        let norm2 = LayerNorm::new(ps, &format!("{name}.norm2"), dim);
        let hidden = dim * ff_ratio;
        let ff1 = Linear::new(ps, &format!("{name}.ff1"), dim, hidden, TRANSFORMER_INIT_STD, rng);
        let ff2 = Linear::new(ps, &format!("{name}.ff2"), hidden, dim, TRANSFORMER_INIT_STD, rng);
        Ok(Self { norm1, attn, norm2, ff1, ff2, dim })
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.norm1.forward(g, p, x)?;
        let h = self.attn.forward(g, p, h)?;
        let x = g.add(x, h)?;
        let h = self.norm2.forward(g, p, x)?;
        let h = self.ff1.forward(g, p, h)?;
        let h = g.relu(h);
        let h = self.ff2.forward(g, p, h)?;
        g.add(x, h)
    }

    pub fn apply(&self, g: &mut Graph, p: &Bound, seq: TokenSequence) -> Result<TokenSequence> {
        Ok(TokenSequence {
            tokens: self.forward(g, p, seq.tokens)?,
            grid: seq.grid,
        })
    }
}

/// Transformer block with a spectral half and a spatial half.
///
/// The first `dim / 2` channels go through the spectral path: laid out on
/// the token grid, transformed with `dft2`, real and imaginary parts stacked
/// as channels, passed through a transformer block, linearly remixed into a
/// new spectrum and returned with `idft2` (added residually). The other half
/// runs through a spatial transformer block. Two zero-initialized linear maps
/// then exchange information between the halves.
#[derive(Clone, Debug)]
pub struct FourierBlock {
    pub spectral: VanillaBlock,
    pub spectral_proj: Linear,
    pub spatial: VanillaBlock,
    pub spat_to_spec: Linear,
    pub spec_to_spat: Linear,
    pub dim: usize,
}

impl FourierBlock {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, heads: usize, ff_ratio: usize, rng: &mut Sampler) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::dim(format!("fourier block: dim {dim} must be even")));
        }
        let half = dim / 2;
        let spectral = VanillaBlock::new(ps, &format!("{name}.spectral"), dim, heads, ff_ratio, rng)?;
        let spectral_proj = Linear::new(ps, &format!("{name}.spectral_proj"), dim, dim, TRANSFORMER_INIT_STD, rng);
        let spatial = VanillaBlock::new(ps, &format!("{name}.spatial"), half, heads, ff_ratio, rng)?;
        let spat_to_spec = Linear::zero(ps, &format!("{name}.spat_to_spec"), half, half);
        let spec_to_spat = Linear::zero(ps, &format!("{name}.spec_to_spat"), half, half);
        Ok(Self { spectral, spectral_proj, spatial, spat_to_spec, spec_to_spat, dim })
    }

    fn spectral_path(&self, g: &mut Graph, p: &Bound, x: Var, grid: (usize, usize)) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (b, l, c) = (s[0], s[1], s[2]);
        let planes = g.transpose(x)?;
        let planes = g.reshape(planes, &[b, c, grid.0, grid.1])?;
        let (re, im) = dft2(g, planes)?;
        let spec = g.concat(&[re, im], 1)?;
        let spec = g.reshape(spec, &[b, 2 * c, l])?;
        let spec = g.transpose(spec)?;
        let spec = self.spectral.forward(g, p, spec)?;
        let spec = self.spectral_proj.forward(g, p, spec)?;
        let spec = g.transpose(spec)?;
        let spec = g.reshape(spec, &[b, 2 * c, grid.0, grid.1])?;
        let parts = g.split(spec, 1, &[c, c])?;
        let back = idft2(g, parts[0], parts[1])?;
        let back = g.reshape(back, &[b, c, l])?;
        let back = g.transpose(back)?;
        g.add(x, back)
    }

    pub fn apply(&self, g: &mut Graph, p: &Bound, seq: TokenSequence) -> Result<TokenSequence> {
        seq.check(g, self.dim)?;
        let half = self.dim / 2;
        let parts = g.split(seq.tokens, 2, &[half, half])?;
        let spec = self.spectral_path(g, p, parts[0], seq.grid)?;
        let spat = self.spatial.forward(g, p, parts[1])?;
        let to_spec = self.spat_to_spec.forward(g, p, spat)?;
        let to_spat = self.spec_to_spat.forward(g, p, spec)?;
        let spec = g.add(spec, to_spec)?;
        let spat = g.add(spat, to_spat)?;
        Ok(TokenSequence {
            tokens: g.concat(&[spec, spat], 2)?,
            grid: seq.grid,
        })
    }
}
