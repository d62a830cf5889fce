//! The tape: nodes appended in evaluation order, gradients accumulated in
//! reverse index order.

use super::kernels::{col2im, gemm, im2col, permute_copy, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Binary { kind: Binary, a: Var, b: Var },
    Scale { x: Var, k: f64 },
    Offset { x: Var },
    MatMul { a: Var, b: Var, ta: bool, tb: bool, dims: MatDims },
    Permute { x: Var, perm: Vec<usize> },
    Reshape { x: Var },
    Conv2d { x: Var, w: Var, bias: Option<Var>, geom: ConvGeom, out_ch: usize },
    ConvTranspose2d { x: Var, w: Var, bias: Option<Var>, geom: ConvGeom, in_ch: usize },
    LeakyRelu { x: Var, slope: f64 },
    Clamp { x: Var, lo: f64, hi: f64 },
    AvgPool2d { x: Var, k: usize },
    LayerNorm { x: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax { x: Var },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Broadcast { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    MeanAxis { x: Var, axis: usize },
    Abs { x: Var },
    Sqrt { x: Var },
    Square { x: Var },
    L2Norm { x: Var },
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct MatDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_shared: bool,
    b_shared: bool,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-owner reverse-mode tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor; zeros when `v` did not receive any.
    pub fn tensor(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => Tensor::new(&self.shapes[v.0], g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn suffix_of(small: &[usize], big: &[usize]) -> bool {
    small.len() <= big.len() && big[big.len() - small.len()..] == *small
}

fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    // ----- elementwise -------------------------------------------------

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = if suffix_of(&sb, &sa) {
            sa.clone()
        } else if suffix_of(&sa, &sb) {
            sb.clone()
        } else {
            return Err(Error::dim(format!("{kind:?}: incompatible shapes {sa:?} and {sb:?}")));
        };
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let n: usize = out_shape.iter().product();
        let f = match kind {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
        };
        let data: Vec<f64> = if va.len() == vb.len() {
            va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect()
        } else {
            (0..n).map(|i| f(va[i % va.len()], vb[i % vb.len()])).collect()
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&out_shape, data)?, Op::Binary { kind, a, b }, rg))
    }

    /// Elementwise sum; the smaller operand may be broadcast over leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * k).collect();
        let value = Tensor::new(t.shape(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale { x, k }, rg)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape(), t.data().iter().map(|v| v + c).collect()).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Offset { x }, rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let value = Tensor::new(t.shape(), t.data().iter().map(|&v| f(v)).collect()).expect("same shape");
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs { x })
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt { x })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square { x })
    }

    // ----- reductions ----------------------------------------------------

    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn reduce_mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.sum() / t.numel() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(m), Op::Mean { x }, rg)
    }

    /// Mean over one axis, which is removed from the shape (a 1-D input
    /// reduces to shape `[1]`).
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim(format!("mean_axis: axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = outer_inner(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let row = &src[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += s;
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::MeanAxis { x, axis }, rg))
    }

    /// Euclidean norm of all elements.
    pub fn l2_norm(&mut self, x: Var) -> Var {
        let n = self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let rg = self.rg(x);
        self.push(Tensor::scalar(n), Op::L2Norm { x }, rg)
    }

    // ----- shape ---------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let n: usize = shape.iter().product();
        if n != t.numel() {
            return Err(Error::dim(format!("reshape: {:?} -> {shape:?}", t.shape())));
        }
        let value = Tensor::new(shape, t.data().to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim(format!("permute: {perm:?} is not a permutation of {shape:?}")));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let mut out = vec![0.0; self.value(x).numel()];
        permute_copy(self.value(x).data(), &shape, perm, &mut out);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::Permute { x, perm: perm.to_vec() }, rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let nd = self.shape(x).len();
        if nd < 2 {
            return Err(Error::dim(format!("transpose: needs >= 2 axes, got {:?}", self.shape(x))));
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(nd - 2, nd - 1);
        self.permute(x, &perm)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::dim("concat: no inputs"))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::dim(format!("concat: axis {axis} out of range for {first:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(Error::dim(format!("concat: {first:?} vs {s:?} along axis {axis}")));
            }
            total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = outer_inner(&out_shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p).data()[o * len..(o + 1) * len]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(format!("slice: [{start}, {}) of axis {axis} in {shape:?}", start + len)));
        }
        let (outer, n, inner) = outer_inner(&shape, axis);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&src[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::Slice { x, axis, start }, rg))
    }

    /// Splits `axis` into consecutive pieces of the given sizes.
    pub fn split(&mut self, x: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let total = self.shape(x).get(axis).copied().unwrap_or(0);
        if sizes.iter().sum::<usize>() != total {
            return Err(Error::dim(format!("split: sizes {sizes:?} do not cover axis {axis} of {:?}", self.shape(x))));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            out.push(self.slice(x, axis, start, s)?);
            start += s;
        }
        Ok(out)
    }

    /// Repeats `x` over new leading axes so that its shape becomes `shape`.
    pub fn broadcast(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if !suffix_of(&s, shape) {
            return Err(Error::dim(format!("broadcast: {s:?} is not a trailing part of {shape:?}")));
        }
        let src = self.value(x).data();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|i| src[i % src.len()]).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Broadcast { x }, rg))
    }

    // ----- linear algebra -----------------------------------------------

    fn matmul_impl(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let err = || Error::dim(format!("matmul: incompatible shapes {sa:?} (t={ta}) and {sb:?} (t={tb})"));
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let (ra, ca) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (rb, cb) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let (m, ka) = if ta { (ca, ra) } else { (ra, ca) };
        let (kb, n) = if tb { (cb, rb) } else { (rb, cb) };
        if ka != kb {
            return Err(err());
        }
        let (lead_a, lead_b) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let (ba, bb): (usize, usize) = (lead_a.iter().product(), lead_b.iter().product());
        let (lead, a_shared, b_shared) = if lead_a == lead_b {
            (lead_a.to_vec(), false, false)
        } else if lead_b.is_empty() {
            (lead_a.to_vec(), false, true)
        } else if lead_a.is_empty() {
            (lead_b.to_vec(), true, false)
        } else {
            return Err(err());
        };
        let batch = ba.max(bb);
        let dims = MatDims { batch, m, k: ka, n, a_shared, b_shared };
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            let ai = if a_shared { va } else { &va[i * m * ka..(i + 1) * m * ka] };
            let bi = if b_shared { vb } else { &vb[i * ka * n..(i + 1) * ka * n] };
            gemm(m, ka, n, 1.0, ai, ta, bi, tb, 0.0, &mut out[i * m * n..(i + 1) * m * n]);
        }
        let mut shape = lead;
        shape.extend([m, n]);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&shape, out)?, Op::MatMul { a, b, ta, tb, dims }, rg))
    }

    /// `a @ b` over the last two axes. Leading axes must match, or one side
    /// is a plain matrix shared across the other's batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false, false)
    }

    /// `a @ b^T` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false, true)
    }

    /// `a^T @ b` without materializing the transpose.
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true, false)
    }

    /// 2-D convolution of `x [N, C, H, W]` with `w [O, C, k, k]`, optional `bias [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let err = |why: &str| Error::dim(format!("conv2d: input {sx:?}, kernel {sw:?}: {why}"));
        if sx.len() != 4 || sw.len() != 4 {
            return Err(err("expected 4-D input and kernel"));
        }
        if sw[1] != sx[1] || sw[2] != sw[3] {
            return Err(err("channel mismatch or non-square kernel"));
        }
        if stride == 0 || sx[2] + 2 * pad < sw[2] || sx[3] + 2 * pad < sw[2] {
            return Err(err("kernel larger than padded input"));
        }
        if let Some(b) = bias {
            if self.shape(b) != [sw[0]] {
                return Err(err(&format!("bias shape {:?}", self.shape(b))));
            }
        }
        let (batch, out_ch) = (sx[0], sw[0]);
        let geom = ConvGeom { channels: sx[1], height: sx[2], width: sx[3], kernel: sw[2], stride, pad };
        let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
        let img = geom.channels * geom.height * geom.width;
        let mut cols = vec![0.0; rows * cols_n];
        let mut out = vec![0.0; batch * out_ch * cols_n];
        let (vx, vw) = (self.value(x).data(), self.value(w).data());
        for i in 0..batch {
            im2col(&vx[i * img..(i + 1) * img], &geom, &mut cols);
            let o = &mut out[i * out_ch * cols_n..(i + 1) * out_ch * cols_n];
            gemm(out_ch, rows, cols_n, 1.0, vw, false, &cols, false, 0.0, o);
            if let Some(b) = bias {
                for (c, &bv) in self.value(b).data().iter().enumerate() {
                    o[c * cols_n..(c + 1) * cols_n].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        let shape = [batch, out_ch, geom.out_h(), geom.out_w()];
        let rg = self.rg(x) || self.rg(w) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(&shape, out)?, Op::Conv2d { x, w, bias, geom, out_ch }, rg))
    }

    /// Transposed convolution (adjoint of [`Graph::conv2d`]) of
    /// `x [N, Cin, H, W]` with `w [Cin, Cout, k, k]`; output side
    /// `(H - 1) * stride - 2 * pad + k`.
    pub fn transpose_conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let err = |why: &str| Error::dim(format!("transpose_conv2d: input {sx:?}, kernel {sw:?}: {why}"));
        if sx.len() != 4 || sw.len() != 4 {
            return Err(err("expected 4-D input and kernel"));
        }
        if sw[0] != sx[1] || sw[2] != sw[3] || stride == 0 {
            return Err(err("channel mismatch, non-square kernel or zero stride"));
        }
        let k = sw[2];
        let ho = (sx[2] - 1) * stride + k;
        let wo = (sx[3] - 1) * stride + k;
        if ho <= 2 * pad || wo <= 2 * pad {
            return Err(err("padding removes the whole output"));
        }
        let (ho, wo) = (ho - 2 * pad, wo - 2 * pad);
        if let Some(b) = bias {
            if self.shape(b) != [sw[1]] {
                return Err(err(&format!("bias shape {:?}", self.shape(b))));
            }
        }
        let (batch, in_ch, out_ch) = (sx[0], sx[1], sw[1]);
        let geom = ConvGeom { channels: out_ch, height: ho, width: wo, kernel: k, stride, pad };
        debug_assert_eq!((geom.out_h(), geom.out_w()), (sx[2], sx[3]));
        let (rows, hw) = (geom.col_rows(), geom.col_cols());
        let mut cols = vec![0.0; rows * hw];
        let mut out = vec![0.0; batch * out_ch * ho * wo];
        let (vx, vw) = (self.value(x).data(), self.value(w).data());
        for i in 0..batch {
            gemm(rows, in_ch, hw, 1.0, vw, true, &vx[i * in_ch * hw..(i + 1) * in_ch * hw], false, 0.0, &mut cols);
            let o = &mut out[i * out_ch * ho * wo..(i + 1) * out_ch * ho * wo];
            col2im(&cols, &geom, o);
            if let Some(b) = bias {
                for (c, &bv) in self.value(b).data().iter().enumerate() {
                    o[c * ho * wo..(c + 1) * ho * wo].iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        let shape = [batch, out_ch, ho, wo];
        let rg = self.rg(x) || self.rg(w) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(&shape, out)?, Op::ConvTranspose2d { x, w, bias, geom, in_ch }, rg))
    }

    /// Non-overlapping `k x k` mean pooling over the last two axes.
    pub fn avg_pool2d(&mut self, x: Var, k: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let nd = shape.len();
        if nd < 2 || k == 0 || !shape[nd - 2].is_multiple_of(k) || !shape[nd - 1].is_multiple_of(k) {
            return Err(Error::dim(format!("avg_pool2d: {shape:?} not divisible by {k}")));
        }
        let (h, w) = (shape[nd - 2], shape[nd - 1]);
        let (ho, wo) = (h / k, w / k);
        let planes = self.value(x).numel() / (h * w);
        let src = self.value(x).data();
        let inv = 1.0 / (k * k) as f64;
        let mut out = vec![0.0; planes * ho * wo];
        for p in 0..planes {
            for y in 0..h {
                for xx in 0..w {
                    out[(p * ho + y / k) * wo + xx / k] += src[(p * h + y) * w + xx] * inv;
                }
            }
        }
        let mut out_shape = shape;
        out_shape[nd - 2] = ho;
        out_shape[nd - 1] = wo;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&out_shape, out)?, Op::AvgPool2d { x, k }, rg))
    }

    /// Normalizes the last axis to zero mean and unit variance (eps 1e-5),
    /// without an affine part.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        const EPS: f64 = 1e-5;
        let t = self.value(x);
        let d = *t.shape().last().expect("non-empty shape");
        let rows = t.numel() / d;
        let mut xhat = vec![0.0; t.numel()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &t.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + EPS).sqrt();
            rstd[r] = rs;
            for (o, v) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = (v - mean) * rs;
            }
        }
        let value = Tensor::new(t.shape(), xhat.clone()).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::LayerNorm { x, xhat, rstd }, rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let d = *t.shape().last().expect("non-empty shape");
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(d) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let value = Tensor::new(t.shape(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Softmax { x }, rg)
    }

    // ----- backward ------------------------------------------------------

    /// Reverse-mode pass from a one-element `loss`. A graph supports one
    /// backward pass; build a new graph for the next step.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::State("backward already ran on this graph; rebuild it".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::dim(format!("backward needs a scalar loss, got {:?}", self.shape(loss))));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.rg(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(gout);
                continue;
            }
            self.backward_node(node, &gout, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn backward_node(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Binary { kind, a, b } => {
                let (a, b) = (*a, *b);
                if rg(a) {
                    let g: Vec<f64> = match kind {
                        Binary::Add | Binary::Sub => gout.to_vec(),
                        Binary::Mul => {
                            let vb = val(b);
                            gout.iter().enumerate().map(|(i, g)| g * vb[i % vb.len()]).collect()
                        }
                    };
                    accumulate_reduced(grads, a, &g, val(a).len());
                }
                if rg(b) {
                    let g: Vec<f64> = match kind {
                        Binary::Add => gout.to_vec(),
                        Binary::Sub => gout.iter().map(|g| -g).collect(),
                        Binary::Mul => {
                            let va = val(a);
                            gout.iter().enumerate().map(|(i, g)| g * va[i % va.len()]).collect()
                        }
                    };
                    accumulate_reduced(grads, b, &g, val(b).len());
                }
            }
            Op::Scale { x, k } => accumulate(grads, *x, gout.iter().map(|g| g * k).collect()),
            Op::Offset { x } | Op::Reshape { x } => accumulate(grads, *x, gout.to_vec()),
            Op::MatMul { a, b, ta, tb, dims } => self.matmul_backward(*a, *b, *ta, *tb, *dims, gout, grads),
            Op::Permute { x, perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let mut g = vec![0.0; gout.len()];
                permute_copy(gout, node.value.shape(), &inv, &mut g);
                accumulate(grads, *x, g);
            }
            Op::Conv2d { x, w, bias, geom, out_ch } => {
                let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
                let img = geom.channels * geom.height * geom.width;
                let batch = val(*x).len() / img;
                let (vx, vw) = (val(*x), val(*w));
                let mut cols = vec![0.0; rows * cols_n];
                let mut dw = rg(*w).then(|| vec![0.0; vw.len()]);
                let mut dx = rg(*x).then(|| vec![0.0; vx.len()]);
                for i in 0..batch {
                    let go = &gout[i * out_ch * cols_n..(i + 1) * out_ch * cols_n];
                    if let Some(dw) = dw.as_mut() {
                        im2col(&vx[i * img..(i + 1) * img], geom, &mut cols);
                        gemm(*out_ch, cols_n, rows, 1.0, go, false, &cols, true, 1.0, dw);
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(rows, *out_ch, cols_n, 1.0, vw, true, go, false, 0.0, &mut cols);
                        col2im(&cols, geom, &mut dx[i * img..(i + 1) * img]);
                    }
                }
                if let Some(b) = bias.filter(|b| rg(*b)) {
                    accumulate(grads, b, channel_sums(gout, batch, *out_ch, cols_n));
                }
                if let Some(dw) = dw {
                    accumulate(grads, *w, dw);
                }
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
            }
            Op::ConvTranspose2d { x, w, bias, geom, in_ch } => {
                let (rows, hw) = (geom.col_rows(), geom.col_cols());
                let out_img = geom.channels * geom.height * geom.width;
                let batch = gout.len() / out_img;
                let (vx, vw) = (val(*x), val(*w));
                let mut cols = vec![0.0; rows * hw];
                let mut dw = rg(*w).then(|| vec![0.0; vw.len()]);
                let mut dx = rg(*x).then(|| vec![0.0; vx.len()]);
                for i in 0..batch {
                    im2col(&gout[i * out_img..(i + 1) * out_img], geom, &mut cols);
                    if let Some(dx) = dx.as_mut() {
                        gemm(*in_ch, rows, hw, 1.0, vw, false, &cols, false, 0.0, &mut dx[i * in_ch * hw..(i + 1) * in_ch * hw]);
                    }
                    if let Some(dw) = dw.as_mut() {
                        gemm(*in_ch, hw, rows, 1.0, &vx[i * in_ch * hw..(i + 1) * in_ch * hw], false, &cols, true, 1.0, dw);
                    }
                }
                if let Some(b) = bias.filter(|b| rg(*b)) {
                    accumulate(grads, b, channel_sums(gout, batch, geom.channels, geom.height * geom.width));
                }
                if let Some(dw) = dw {
                    accumulate(grads, *w, dw);
                }
                if let Some(dx) = dx {
                    accumulate(grads, *x, dx);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let g = gout.iter().zip(val(*x)).map(|(g, &v)| if v > 0.0 { *g } else { g * slope }).collect();
                accumulate(grads, *x, g);
            }
            Op::Clamp { x, lo, hi } => {
                let g = gout
                    .iter()
                    .zip(val(*x))
                    .map(|(g, v)| if (*lo..=*hi).contains(v) { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *x, g);
            }
            Op::AvgPool2d { x, k } => {
                let shape = self.nodes[x.0].value.shape();
                let nd = shape.len();
                let (h, w) = (shape[nd - 2], shape[nd - 1]);
                let (ho, wo) = (h / k, w / k);
                let planes = val(*x).len() / (h * w);
                let inv = 1.0 / (k * k) as f64;
                let mut g = vec![0.0; val(*x).len()];
                for p in 0..planes {
                    for y in 0..h {
                        for xx in 0..w {
                            g[(p * h + y) * w + xx] = gout[(p * ho + y / k) * wo + xx / k] * inv;
                        }
                    }
                }
                accumulate(grads, *x, g);
            }
            Op::LayerNorm { x, xhat, rstd } => {
                let d = xhat.len() / rstd.len();
                let mut g = vec![0.0; xhat.len()];
                for (r, &rs) in rstd.iter().enumerate() {
                    let gy = &gout[r * d..(r + 1) * d];
                    let xh = &xhat[r * d..(r + 1) * d];
                    let mg = gy.iter().sum::<f64>() / d as f64;
                    let mgx = gy.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        g[r * d + j] = rs * (gy[j] - mg - xh[j] * mgx);
                    }
                }
                accumulate(grads, *x, g);
            }
            Op::Softmax { x } => {
                let y = node.value.data();
                let d = *node.value.shape().last().unwrap();
                let mut g = vec![0.0; y.len()];
                for ((gr, yr), go) in g.chunks_mut(d).zip(y.chunks(d)).zip(gout.chunks(d)) {
                    let dot: f64 = yr.iter().zip(go).map(|(a, b)| a * b).sum();
                    for j in 0..d {
                        gr[j] = yr[j] * (go[j] - dot);
                    }
                }
                accumulate(grads, *x, g);
            }
            Op::Concat { parts, axis } => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = outer_inner(out_shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.shape()[*axis];
                    if rg(p) {
                        let mut g = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            g.extend_from_slice(&gout[base..base + len * inner]);
                        }
                        accumulate(grads, p, g);
                    }
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let in_shape = self.nodes[x.0].value.shape();
                let (outer, n, inner) = outer_inner(in_shape, *axis);
                let len = node.value.shape()[*axis];
                let mut g = vec![0.0; val(*x).len()];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    g[dst..dst + len * inner].copy_from_slice(&gout[o * len * inner..(o + 1) * len * inner]);
                }
                accumulate(grads, *x, g);
            }
            Op::Broadcast { x } => accumulate_reduced(grads, *x, gout, val(*x).len()),
            Op::Sum { x } => accumulate(grads, *x, vec![gout[0]; val(*x).len()]),
            Op::Mean { x } => {
                let n = val(*x).len();
                accumulate(grads, *x, vec![gout[0] / n as f64; n]);
            }
            Op::MeanAxis { x, axis } => {
                let (outer, n, inner) = outer_inner(self.nodes[x.0].value.shape(), *axis);
                let mut g = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        for q in 0..inner {
                            g[(o * n + j) * inner + q] = gout[o * inner + q] / n as f64;
                        }
                    }
                }
                accumulate(grads, *x, g);
            }
            Op::Abs { x } => {
                let g = gout.iter().zip(val(*x)).map(|(g, v)| if *v > 0.0 { *g } else if *v < 0.0 { -g } else { 0.0 }).collect();
                accumulate(grads, *x, g);
            }
            Op::Sqrt { x } => {
                let y = node.value.data();
                let g = gout.iter().zip(y).map(|(g, y)| if *y > 0.0 { g * 0.5 / y } else { 0.0 }).collect();
                accumulate(grads, *x, g);
            }
            Op::Square { x } => {
                let g = gout.iter().zip(val(*x)).map(|(g, v)| 2.0 * g * v).collect();
                accumulate(grads, *x, g);
            }
            Op::L2Norm { x } => {
                let norm = node.value.item();
                let g = if norm > 0.0 {
                    val(*x).iter().map(|v| gout[0] * v / norm).collect()
                } else {
                    vec![0.0; val(*x).len()]
                };
                accumulate(grads, *x, g);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn matmul_backward(&self, a: Var, b: Var, ta: bool, tb: bool, d: MatDims, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let (m, k, n) = (d.m, d.k, d.n);
        let slice_a = |i: usize| if d.a_shared { va } else { &va[i * m * k..(i + 1) * m * k] };
        let slice_b = |i: usize| if d.b_shared { vb } else { &vb[i * k * n..(i + 1) * k * n] };
        if self.nodes[a.0].requires_grad {
            let mut ga = vec![0.0; va.len()];
            for i in 0..d.batch {
                let go = &gout[i * m * n..(i + 1) * m * n];
                let off = if d.a_shared { 0 } else { i * m * k };
                let beta = if d.a_shared { 1.0 } else { 0.0 };
                let dst = &mut ga[off..off + m * k];
                if !ta {
                    gemm(m, n, k, 1.0, go, false, slice_b(i), !tb, beta, dst);
                } else {
                    gemm(k, n, m, 1.0, slice_b(i), tb, go, true, beta, dst);
                }
            }
            accumulate(grads, a, ga);
        }
        if self.nodes[b.0].requires_grad {
            let mut gb = vec![0.0; vb.len()];
            for i in 0..d.batch {
                let go = &gout[i * m * n..(i + 1) * m * n];
                let off = if d.b_shared { 0 } else { i * k * n };
                let beta = if d.b_shared { 1.0 } else { 0.0 };
                let dst = &mut gb[off..off + k * n];
                if !tb {
                    gemm(k, m, n, 1.0, slice_a(i), !ta, go, false, beta, dst);
                } else {
                    gemm(n, m, k, 1.0, go, true, slice_a(i), ta, beta, dst);
                }
            }
            accumulate(grads, b, gb);
        }
    }
}

fn channel_sums(gout: &[f64], batch: usize, channels: usize, plane: usize) -> Vec<f64> {
    let mut g = vec![0.0; channels];
    for i in 0..batch {
        for (c, gc) in g.iter_mut().enumerate() {
            let base = (i * channels + c) * plane;
            *gc += gout[base..base + plane].iter().sum::<f64>();
        }
    }
    g
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// Accumulates `g` into `v`, summing over repeated leading blocks when `v`
/// was broadcast (`len < g.len()`).
fn accumulate_reduced(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64], len: usize) {
    if len == g.len() {
        accumulate(grads, v, g.to_vec());
        return;
    }
    let mut r = vec![0.0; len];
    for chunk in g.chunks(len) {
        r.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
    }
    accumulate(grads, v, r);
}
