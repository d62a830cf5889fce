//! 2-D discrete Fourier transform over the last two axes, built from dense
//! cosine/sine matrix products so that gradients come from the matmul rules.

use std::f64::consts::PI;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn cos_sin(n: usize) -> (Tensor, Tensor) {
    let angle = |i: usize| {
        let (k, t) = (i / n, i % n);
        2.0 * PI * ((k * t) % n) as f64 / n as f64
    };
    (
        Tensor::from_fn(&[n, n], |i| angle(i).cos()),
        Tensor::from_fn(&[n, n], |i| angle(i).sin()),
    )
}

fn plane_dims(g: &Graph, x: Var) -> Result<(usize, usize)> {
    let s = g.shape(x);
    if s.len() < 2 {
        return Err(Error::dim(format!("dft2 needs at least 2 axes, got {s:?}")));
    }
    Ok((s[s.len() - 2], s[s.len() - 1]))
}

/// Forward transform of a real input; returns `(real, imaginary)` parts with
/// the input's shape. Unnormalized.
pub fn dft2(g: &mut Graph, x: Var) -> Result<(Var, Var)> {
    let (h, w) = plane_dims(g, x)?;
    let (ch, sh) = cos_sin(h);
    let (cw, sw) = cos_sin(w);
    let (ch, sh) = (g.constant(ch), g.constant(sh));
    let (cw, sw) = (g.constant(cw), g.constant(sw));
    let chx = g.matmul(ch, x)?;
    let shx = g.matmul(sh, x)?;
    let a = g.matmul(chx, cw)?;
    let b = g.matmul(shx, sw)?;
    let re = g.sub(a, b)?;
    let c = g.matmul(shx, cw)?;
    let d = g.matmul(chx, sw)?;
    let s = g.add(c, d)?;
    let im = g.neg(s);
    Ok((re, im))
}

/// Real part of the inverse transform, normalized by `1 / (H W)`.
pub fn idft2(g: &mut Graph, re: Var, im: Var) -> Result<Var> {
    let (h, w) = plane_dims(g, re)?;
    if g.shape(re) != g.shape(im) {
        return Err(Error::dim(format!(
            "idft2: real {:?} and imaginary {:?} differ",
            g.shape(re),
            g.shape(im)
        )));
    }
    let (ch, sh) = cos_sin(h);
    let (cw, sw) = cos_sin(w);
    let (ch, sh) = (g.constant(ch), g.constant(sh));
    let (cw, sw) = (g.constant(cw), g.constant(sw));
    let rc = g.matmul(re, cw)?;
    let is = g.matmul(im, sw)?;
    let a = g.sub(rc, is)?;
    let rs = g.matmul(re, sw)?;
    let ic = g.matmul(im, cw)?;
    let b = g.add(rs, ic)?;
    let ca = g.matmul(ch, a)?;
    let sb = g.matmul(sh, b)?;
    let out = g.sub(ca, sb)?;
    Ok(g.scale(out, 1.0 / (h * w) as f64))
}
