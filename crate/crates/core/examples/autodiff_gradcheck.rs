//! Builds a small graph, runs backward, and checks a spectral op against
//! finite differences.

use lownoise::autodiff::{dft2, gradcheck, idft2, Graph, Tensor};

fn main() -> lownoise::Result<()> {
    let mut g = Graph::new();
    let w = g.leaf(Tensor::new(&[2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.5])?, true);
    let x = g.constant(Tensor::new(&[3, 1], vec![1.0, 2.0, 3.0])?);
    let y = g.matmul(w, x)?;
    let y = g.leaky_relu(y, 0.2);
    let loss = g.reduce_sum(y);
    let grads = g.backward(loss)?;
    println!("loss {} dloss/dw {:?}", g.value(loss).item(), grads.tensor(w).data());

    let input = Tensor::from_fn(&[4, 4], |i| ((i * 7) % 5) as f64 - 2.0);
    let check = gradcheck(&[input], |g, v| {
        let (re, im) = dft2(g, v[0])?;
        let mag = g.mul(re, re)?;
        let back = idft2(g, mag, im)?;
        Ok(back)
    })?;
    println!("dft2/idft2 gradcheck: {} entries, max relative error {:.2e}", check.checked, check.max_rel_err);
    Ok(())
}
