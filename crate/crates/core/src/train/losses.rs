use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::Denoiser;
use crate::nn::Bound;
use crate::sim::Sampler;

/// Alignment terms computed through a frozen denoiser.
#[derive(Clone, Copy, Debug)]
pub struct AlignmentLosses {
    /// `mean |P(d_hat) - P(d_rn)|`.
    pub l1: Var,
    /// Mean over feature taps of `mean((phi(d_hat) - phi(d_rn))^2)`.
    pub perceptual: Var,
}

/// Both alignment terms from one denoiser pass per input. The denoiser's
/// parameters must be bound as constants.
pub fn alignment_losses(g: &mut Graph, den: &Denoiser, p: &Bound, d_hat: Var, d_rn: Var) -> Result<AlignmentLosses> {
    if g.shape(d_hat) != g.shape(d_rn) {
        return Err(Error::dim(format!(
            "alignment: {:?} vs {:?}",
            g.shape(d_hat),
            g.shape(d_rn)
        )));
    }
    if p.vars().iter().any(|&v| g.requires_grad(v)) {
        return Err(Error::State("the denoiser must be frozen during alignment".into()));
    }
    let a = den.forward(g, p, d_hat)?;
    let b = den.forward(g, p, d_rn)?;
    let l1 = mean_abs_diff(g, a.output, b.output)?;
    let mut terms = Vec::with_capacity(a.taps.len());
    for (&fa, &fb) in a.taps.iter().zip(&b.taps) {
        terms.push(mean_sq_diff(g, fa, fb)?);
    }
    let perceptual = mean_of(g, &terms)?;
    Ok(AlignmentLosses { l1, perceptual })
}

pub fn mean_abs_diff(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let d = g.abs(d);
    Ok(g.reduce_mean(d))
}

pub fn mean_sq_diff(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let d = g.square(d);
    Ok(g.reduce_mean(d))
}

fn mean_of(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let first = *terms.first().ok_or_else(|| Error::dim("no feature taps"))?;
    let mut acc = first;
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scale(acc, 1.0 / terms.len() as f64))
}

/// `(max(0, |s1 - s2| / distance - 1))^2`, averaged over pairs.
pub fn lipschitz_penalty(g: &mut Graph, s1: Var, s2: Var, distance: f64) -> Result<Var> {
    let d = g.sub(s1, s2)?;
    let d = g.abs(d);
    let q = g.scale(d, 1.0 / distance);
    let q = g.add_scalar(q, -1.0);
    let q = g.relu(q);
    let q = g.square(q);
    Ok(g.reduce_mean(q))
}

/// Critic objective `E[D(fake)] - E[D(real)] + coef * penalty` and the
/// generator objective `-E[D(fake)]` from per-sample scores.
pub struct AdversarialLosses {
    pub critic: Var,
    pub generator: Var,
    /// `E[D(real)] - E[D(fake)]`.
    pub gap: f64,
    pub penalty: Var,
}

pub fn adversarial_losses(
    g: &mut Graph,
    real: Var,
    fake: Var,
    pair: (Var, Var),
    distance: f64,
    coef: f64,
) -> Result<AdversarialLosses> {
    if g.value(real).numel() == 0 || g.value(fake).numel() == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let mr = g.reduce_mean(real);
    let mf = g.reduce_mean(fake);
    let gap = g.value(mr).item() - g.value(mf).item();
    let wgap = g.sub(mf, mr)?;
    let penalty = lipschitz_penalty(g, pair.0, pair.1, distance)?;
    let scaled = g.scale(penalty, coef);
    let critic = g.add(wgap, scaled)?;
    let generator = g.neg(mf);
    Ok(AdversarialLosses { critic, generator, gap, penalty })
}

/// `adv + lambda1 * l1 + lambda2 * per`.
pub fn total_loss(adv: f64, l1: f64, per: f64, lambda1: f64, lambda2: f64) -> f64 {
    adv + lambda1 * l1 + lambda2 * per
}

/// Interpolates `x1 = eps * real + (1 - eps) * fake` with per-sample
/// `eps ~ U(0, 1)`, and partners `x2 = x1 + distance * u` where `u` is the
/// unit vector from fake to real (a fixed diagonal direction when they coincide).
pub fn penalty_pairs(real: &Tensor, fake: &Tensor, distance: f64, rng: &mut Sampler) -> Result<(Tensor, Tensor)> {
    if real.shape() != fake.shape() || real.shape().len() < 2 {
        return Err(Error::dim(format!("penalty pairs: {:?} vs {:?}", real.shape(), fake.shape())));
    }
    let b = real.shape()[0];
    let n = real.numel() / b;
    let mut x1 = Vec::with_capacity(real.numel());
    let mut x2 = Vec::with_capacity(real.numel());
    for i in 0..b {
        let (r, f) = (&real.data()[i * n..(i + 1) * n], &fake.data()[i * n..(i + 1) * n]);
        let eps = rng.uniform();
        let norm = r.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        for (a, c) in r.iter().zip(f) {
            let x = eps * a + (1.0 - eps) * c;
            let u = if norm > 0.0 { (a - c) / norm } else { 1.0 / (n as f64).sqrt() };
            x1.push(x);
            x2.push(x + distance * u);
        }
    }
    Ok((Tensor::new(real.shape(), x1)?, Tensor::new(real.shape(), x2)?))
}
