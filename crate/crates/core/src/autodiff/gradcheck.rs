//! Finite-difference verification of backward rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Worst relative error between analytic and central-difference gradients.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Checks `build` on the given inputs. The scalar loss is `sum(out * R)` for a
/// fixed random `R`, every input is perturbed by `h = 1e-5`, and errors are
/// `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn gradcheck<F>(inputs: &[Tensor], build: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9);
    let probe = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        g.value(out).numel()
    };
    let weights: Vec<f64> = (0..probe).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r = Tensor::new(&[probe], weights)?;

    let loss_of = |ins: &[Tensor], grad: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.leaf(t.clone(), grad)).collect();
        let out = build(&mut g, &vars)?;
        let n = g.value(out).numel();
        let flat = g.reshape(out, &[n])?;
        let rv = g.constant(r.clone());
        let prod = g.mul(flat, rv)?;
        let loss = g.reduce_sum(prod);
        let value = g.value(loss).item();
        if !grad {
            return Ok((value, Vec::new()));
        }
        let grads = g.backward(loss)?;
        Ok((value, vars.iter().map(|&v| grads.tensor(v)).collect()))
    };

    let (_, analytic) = loss_of(inputs, true)?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (t, a) in analytic.iter().enumerate() {
        for i in 0..work[t].numel() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + H;
            let (lp, _) = loss_of(&work, false)?;
            work[t].data_mut()[i] = orig - H;
            let (lm, _) = loss_of(&work, false)?;
            work[t].data_mut()[i] = orig;
            let num = (lp - lm) / (2.0 * H);
            let an = a.data()[i];
            let err = (an - num).abs() / an.abs().max(num.abs()).max(1e-3);
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_err: worst,
        checked,
    })
}
