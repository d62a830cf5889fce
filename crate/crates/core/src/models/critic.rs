use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{
    seq_downsample, Bound, FourierBlock, Linear, ParamId, ParamStore, Patchify, TokenSequence, VanillaBlock,
    TRANSFORMER_INIT_STD,
};
use crate::raw::CHANNELS;
use crate::sim::Sampler;

/// Which block type fills the three multi-scale stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticKind {
    /// Fourier transformer blocks (spectral and spatial paths).
    Fourier,
    /// Plain transformer blocks, for ablations.
    Vanilla,
}

impl std::str::FromStr for CriticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ftd" | "fourier" => Ok(Self::Fourier),
            "vanilla" | "transformer" => Ok(Self::Vanilla),
            other => Err(Error::Parameter(format!("unknown discriminator {other:?} (ftd, vanilla)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CriticConfig {
    pub kind: CriticKind,
    pub image_size: usize,
    pub patch_sizes: [usize; 3],
    pub dim: usize,
    pub heads: usize,
    pub ff_ratio: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            kind: CriticKind::Fourier,
            image_size: 32,
            patch_sizes: [2, 4, 8],
            dim: 64,
            heads: 4,
            ff_ratio: 2,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        let [p1, p2, p3] = self.patch_sizes;
        let s = self.image_size;
        let ok = p1 > 0
            && p2 % p1 == 0
            && p3 % p2 == 0
            && p2 > p1
            && p3 > p2
            && s.is_multiple_of(p3)
            && self.dim.is_multiple_of(2)
            && self.heads > 0
            && (self.dim / 2).is_multiple_of(self.heads)
            && self.ff_ratio > 0;
        if !ok {
            return Err(Error::Parameter(format!("unsupported critic configuration {self:?}")));
        }
        Ok(())
    }

    /// Token counts entering the three stages.
    pub fn sequence_lengths(&self) -> [usize; 3] {
        self.patch_sizes.map(|p| (self.image_size / p).pow(2))
    }
}

#[derive(Clone, Debug)]
enum Stage {
    Fourier(FourierBlock),
    Vanilla(VanillaBlock),
}

impl Stage {
    fn apply(&self, g: &mut Graph, p: &Bound, seq: TokenSequence) -> Result<TokenSequence> {
        match self {
            Stage::Fourier(b) => b.apply(g, p, seq),
            Stage::Vanilla(b) => b.apply(g, p, seq),
        }
    }
}

/// Multi-scale transformer critic producing one unbounded score per image.
///
/// Three patch sizes give three token sequences. The longest, plus a
/// learned position table, enters stage 1; after each stage the tokens are
/// pooled down to the next scale's grid and channel-concatenated with that
/// scale's embedding (then linearly fused back to `dim`). A plain
/// transformer block, mean pooling over tokens and a linear head follow.
#[derive(Clone, Debug)]
pub struct Critic {
    pub config: CriticConfig,
    embeds: Vec<Patchify>,
    pos: ParamId,
    fuse: Vec<Linear>,
    stages: Vec<Stage>,
    last: VanillaBlock,
    head: Linear,
}

impl Critic {
    pub fn build(ps: &mut ParamStore, config: CriticConfig, rng: &mut Sampler) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let embeds = (0..3)
            .map(|i| Patchify::new(ps, &format!("embed{i}"), CHANNELS, config.patch_sizes[i], d, rng))
            .collect();
        let pos = ps.normal("pos", &[config.sequence_lengths()[0], d], TRANSFORMER_INIT_STD, rng);
        let fuse = (1..3)
            .map(|i| Linear::new(ps, &format!("fuse{i}"), 2 * d, d, TRANSFORMER_INIT_STD, rng))
            .collect();
        let mut stages = Vec::with_capacity(3);
        for i in 0..3 {
            let name = format!("stage{i}");
            stages.push(match config.kind {
                CriticKind::Fourier => Stage::Fourier(FourierBlock::new(ps, &name, d, config.heads, config.ff_ratio, rng)?),
                CriticKind::Vanilla => Stage::Vanilla(VanillaBlock::new(ps, &name, d, config.heads, config.ff_ratio, rng)?),
            });
        }
        let last = VanillaBlock::new(ps, "last", d, config.heads, config.ff_ratio, rng)?;
        let head = Linear::new(ps, "head", d, 1, TRANSFORMER_INIT_STD, rng);
        Ok(Self { config, embeds, pos, fuse, stages, last, head })
    }

    /// Scores `[batch]` for images `[batch, 4, S, S]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let size = self.config.image_size;
        if s.len() != 4 || s[1] != CHANNELS || s[2] != size || s[3] != size {
            return Err(Error::dim(format!("critic expects [batch, 4, {size}, {size}], got {s:?}")));
        }
        let batch = s[0];
        let first = self.embeds[0].forward(g, p, x)?;
        let tokens = g.add(first.tokens, p.var(self.pos))?;
        let mut seq = self.stages[0].apply(g, p, TokenSequence { tokens, grid: first.grid })?;
        for i in 1..3 {
            let factor = self.config.patch_sizes[i] / self.config.patch_sizes[i - 1];
            let pooled = seq_downsample(g, seq, factor)?;
            let emb = self.embeds[i].forward(g, p, x)?;
            let cat = g.concat(&[pooled.tokens, emb.tokens], 2)?;
            let tokens = self.fuse[i - 1].forward(g, p, cat)?;
            seq = self.stages[i].apply(g, p, TokenSequence { tokens, grid: emb.grid })?;
        }
        let tokens = self.last.forward(g, p, seq.tokens)?;
        let pooled = g.mean_axis(tokens, 1)?;
        let score = self.head.forward(g, p, pooled)?;
        g.reshape(score, &[batch])
    }
}
