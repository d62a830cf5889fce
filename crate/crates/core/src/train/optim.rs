use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const ADAM_EPS: f64 = 1e-8;

/// `lr_final + (lr_init - lr_final) * (1 + cos(pi t / T)) / 2`, with `t` clamped to `[0, T]`.
pub fn cosine_lr(t: usize, total: usize, lr_init: f64, lr_final: f64) -> f64 {
    if total == 0 {
        return lr_final;
    }
    let frac = t.min(total) as f64 / total as f64;
    lr_final + 0.5 * (lr_init - lr_final) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// First and second moment accumulators for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            beta1,
            beta2,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != params.len() || grads.iter().zip(params.tensors()).any(|(g, p)| g.shape() != p.shape()) {
            return Err(Error::dim("adam: gradients do not match parameters"));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("non-finite gradient for {}", params.names()[i])));
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }

    /// Moments as one flat vector (`m` then `v`), for checkpoints.
    pub fn flatten(&self) -> Vec<f64> {
        self.m.iter().chain(&self.v).flatten().copied().collect()
    }

    pub fn load_flat(&mut self, step: u64, flat: &[f64]) -> Result<()> {
        let n: usize = self.m.iter().map(Vec::len).sum();
        if flat.len() != 2 * n {
            return Err(Error::Architecture(format!("optimizer state has {} values, expected {}", flat.len(), 2 * n)));
        }
        let mut it = flat.iter();
        for buf in self.m.iter_mut().chain(self.v.iter_mut()) {
            for x in buf.iter_mut() {
                *x = *it.next().expect("length checked");
            }
        }
        self.step = step;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 2e-4, 1e-6), 2e-4);
        assert!((cosine_lr(100, 100, 2e-4, 1e-6) - 1e-6).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 2e-4, 1e-6) - 1.005e-4).abs() < 1e-15);
        assert!(cosine_lr(30, 100, 2e-4, 1e-6) > cosine_lr(31, 100, 2e-4, 1e-6));
    }

    fn one_scalar(v: f64) -> ParamStore {
        let mut ps = ParamStore::new();
        ps.add("x", Tensor::scalar(v));
        ps
    }

    #[test]
    fn single_step_closed_form() {
        let mut ps = one_scalar(1.0);
        let mut st = AdamState::new(&ps, 0.5, 0.999);
        st.update(&mut ps, &[Tensor::scalar(1.0)], 0.1).unwrap();
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let want = 1.0 - 0.1 / (1.0 + ADAM_EPS);
        assert_eq!(ps.tensors()[0].item(), want);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut ps = one_scalar(0.3);
        let mut st = AdamState::new(&ps, 0.5, 0.999);
        for _ in 0..3 {
            st.update(&mut ps, &[Tensor::scalar(0.0)], 0.1).unwrap();
        }
        assert_eq!(ps.tensors()[0].item(), 0.3);
        assert!(matches!(
            st.update(&mut ps, &[Tensor::scalar(f64::NAN)], 0.1),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn state_round_trip() {
        let mut ps = one_scalar(0.3);
        let mut st = AdamState::new(&ps, 0.5, 0.999);
        st.update(&mut ps, &[Tensor::scalar(0.7)], 0.1).unwrap();
        let mut other = AdamState::new(&ps, 0.5, 0.999);
        other.load_flat(st.step, &st.flatten()).unwrap();
        assert_eq!(other, st);
    }
}
