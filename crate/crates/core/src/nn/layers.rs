use super::params::{Bound, ParamId, ParamStore};
use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::sim::Sampler;

/// Standard deviation for transformer weights.
pub const TRANSFORMER_INIT_STD: f64 = 0.02;

/// Slope of the leaky ReLU used in the convolutional networks.
pub const LEAKY_SLOPE: f64 = 0.2;

/// `x @ w + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize, std: f64, rng: &mut Sampler) -> Self {
        let w = ps.normal(format!("{name}.w"), &[d_in, d_out], std, rng);
        let b = ps.zeros(format!("{name}.b"), &[d_out]);
        Self { w, b, d_in, d_out }
    }

    pub fn zero(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Self {
        let w = ps.zeros(format!("{name}.w"), &[d_in, d_out]);
        let b = ps.zeros(format!("{name}.b"), &[d_out]);
        Self { w, b, d_in, d_out }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.w))?;
        g.add(y, p.var(self.b))
    }
}

/// Layer normalization over the last axis with learned scale and offset.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = ps.add(format!("{name}.gamma"), crate::autodiff::Tensor::full(&[dim], 1.0));
        let beta = ps.zeros(format!("{name}.beta"), &[dim]);
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let n = g.layer_norm(x);
        let s = g.mul(n, p.var(self.gamma))?;
        g.add(s, p.var(self.beta))
    }
}

/// Square-kernel convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    /// He-normal weights for a leaky-ReLU network.
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, rng: &mut Sampler) -> Self {
        let fan_in = (c_in * k * k) as f64;
        let std = (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in)).sqrt();
        let w = ps.normal(format!("{name}.w"), &[c_out, c_in, k, k], std, rng);
        let b = ps.zeros(format!("{name}.b"), &[c_out]);
        Self { w, b, stride, pad: k / 2 }
    }

    pub fn zero(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        let w = ps.zeros(format!("{name}.w"), &[c_out, c_in, k, k]);
        let b = ps.zeros(format!("{name}.b"), &[c_out]);
        Self { w, b, stride: 1, pad: k / 2 }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.var(self.w), Some(p.var(self.b)), self.stride, self.pad)
    }
}

/// 2x2 stride-2 transposed convolution (doubles height and width).
#[derive(Clone, Debug)]
pub struct UpConv {
    pub w: ParamId,
    pub b: ParamId,
}

impl UpConv {
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut Sampler) -> Self {
        let std = (2.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * c_in as f64)).sqrt();
        let w = ps.normal(format!("{name}.w"), &[c_in, c_out, 2, 2], std, rng);
        let b = ps.zeros(format!("{name}.b"), &[c_out]);
        Self { w, b }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.transpose_conv2d(x, p.var(self.w), Some(p.var(self.b)), 2, 0)
    }
}

/// Two 3x3 convolutions with a residual connection; a 1x1 projection
/// carries the skip when the width changes.
#[derive(Clone, Debug)]
pub struct ResConvBlock {
    pub conv1: Conv,
    pub conv2: Conv,
    pub skip: Option<Conv>,
}

impl ResConvBlock {
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut Sampler) -> Self {
        let conv1 = Conv::new(ps, &format!("{name}.conv1"), c_in, c_out, 3, 1, rng);
        let conv2 = Conv::new(ps, &format!("{name}.conv2"), c_out, c_out, 3, 1, rng);
        let skip = (c_in != c_out).then(|| Conv::new(ps, &format!("{name}.skip"), c_in, c_out, 1, 1, rng));
        Self { conv1, conv2, skip }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, p, x)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let h = self.conv2.forward(g, p, h)?;
        let s = match &self.skip {
            Some(c) => c.forward(g, p, x)?,
            None => x,
        };
        let y = g.add(h, s)?;
        Ok(g.leaky_relu(y, LEAKY_SLOPE))
    }
}
