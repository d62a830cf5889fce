//! Network building blocks: parameter storage, linear/conv layers,
//! transformer blocks (plain and Fourier), patch embedding and token pooling.

mod layers;
mod params;
mod tokens;
mod transformer;

pub use layers::{Conv, LayerNorm, Linear, ResConvBlock, UpConv, LEAKY_SLOPE, TRANSFORMER_INIT_STD};
pub use params::{Bound, ParamId, ParamStore};
pub use tokens::{seq_downsample, Patchify, TokenSequence};
pub use transformer::{Attention, FourierBlock, VanillaBlock};
