use super::layers::{Linear, TRANSFORMER_INIT_STD};
use super::params::{Bound, ParamStore};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::sim::Sampler;

/// Tokens `[batch, L, dim]` laid out on an `(h, w)` grid with `h * w = L`.
#[derive(Clone, Copy, Debug)]
pub struct TokenSequence {
    pub tokens: Var,
    pub grid: (usize, usize),
}

impl TokenSequence {
    pub fn new(g: &Graph, tokens: Var, grid: (usize, usize)) -> Result<Self> {
        let seq = Self { tokens, grid };
        let dim = g.shape(tokens).last().copied().unwrap_or(0);
        seq.check(g, dim)?;
        Ok(seq)
    }

    pub(crate) fn check(&self, g: &Graph, dim: usize) -> Result<()> {
        let s = g.shape(self.tokens);
        if s.len() != 3 || s[1] != self.grid.0 * self.grid.1 || s[2] != dim {
            return Err(Error::dim(format!(
                "token sequence {s:?} does not match grid {:?} and dim {dim}",
                self.grid
            )));
        }
        Ok(())
    }

    pub fn len(&self, g: &Graph) -> usize {
        g.shape(self.tokens)[1]
    }

    pub fn is_empty(&self, g: &Graph) -> bool {
        self.len(g) == 0
    }

    pub fn dim(&self, g: &Graph) -> usize {
        g.shape(self.tokens)[2]
    }
}

/// Linear embedding of non-overlapping `p x p` blocks of a 4-channel image.
#[derive(Clone, Debug)]
pub struct Patchify {
    pub embed: Linear,
    pub patch: usize,
    pub channels: usize,
}

impl Patchify {
    pub fn new(ps: &mut ParamStore, name: &str, channels: usize, patch: usize, dim: usize, rng: &mut Sampler) -> Self {
        let embed = Linear::new(ps, name, channels * patch * patch, dim, TRANSFORMER_INIT_STD, rng);
        Self { embed, patch, channels }
    }

    /// Flattened blocks `[batch, L, channels * p * p]`, channel-major inside a block.
    pub fn blocks(&self, g: &mut Graph, x: Var) -> Result<(Var, (usize, usize))> {
        let s = g.shape(x).to_vec();
        let p = self.patch;
        if s.len() != 4 || s[1] != self.channels || p == 0 || !s[2].is_multiple_of(p) || !s[3].is_multiple_of(p) {
            return Err(Error::dim(format!(
                "patchify: input {s:?} is not [batch, {}, H, W] with H, W divisible by {p}",
                self.channels
            )));
        }
        let (b, c, gh, gw) = (s[0], s[1], s[2] / p, s[3] / p);
        let r = g.reshape(x, &[b, c, gh, p, gw, p])?;
        let r = g.permute(r, &[0, 2, 4, 1, 3, 5])?;
        Ok((g.reshape(r, &[b, gh * gw, c * p * p])?, (gh, gw)))
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<TokenSequence> {
        let (blocks, grid) = self.blocks(g, x)?;
        let tokens = self.embed.forward(g, p, blocks)?;
        Ok(TokenSequence { tokens, grid })
    }
}

/// Lays tokens out as a `[batch, dim, h, w]` map, mean-pools `k x k`
/// windows and flattens back.
pub fn seq_downsample(g: &mut Graph, seq: TokenSequence, k: usize) -> Result<TokenSequence> {
    let (h, w) = seq.grid;
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(Error::dim(format!("seq_downsample: grid {:?} not divisible by {k}", seq.grid)));
    }
    let s = g.shape(seq.tokens).to_vec();
    let (b, d) = (s[0], s[2]);
    let m = g.transpose(seq.tokens)?;
    let m = g.reshape(m, &[b, d, h, w])?;
    let m = g.avg_pool2d(m, k)?;
    let (h2, w2) = (h / k, w / k);
    let m = g.reshape(m, &[b, d, h2 * w2])?;
    Ok(TokenSequence {
        tokens: g.transpose(m)?,
        grid: (h2, w2),
    })
}
