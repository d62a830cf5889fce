//! Counter-based, splittable random streams.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Identity of a ChaCha8 keystream: a 64-bit seed (the key) and a 64-bit
/// stream id (the nonce). Distinct stream ids under one key never overlap,
/// whatever the number of draws.
///
/// A stream is a value: samplers that take `&RngStream` always start from
/// the beginning of the keystream, so equal streams give equal samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    stream: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Child stream `index` of this stream. Pure: does not consume draws.
    pub fn split(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019))),
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> Sampler {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        Sampler { rng }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Running generator drawn from an [`RngStream`].
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Poisson draw: sequential-search inversion below `switch`, rounded
    /// Gaussian `round(N(lambda, lambda))` clamped at zero above it.
    pub fn poisson(&mut self, lambda: f64, switch: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        if lambda < switch {
            let u = self.uniform();
            let mut k = 0u64;
            let mut p = (-lambda).exp();
            let mut cdf = p;
            while u > cdf {
                k += 1;
                p *= lambda / k as f64;
                cdf += p;
                if p == 0.0 && cdf < u {
                    // tail underflow; accept the current count
                    break;
                }
            }
            k as f64
        } else {
            (lambda + lambda.sqrt() * self.normal()).round().max(0.0)
        }
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_same_draws() {
        let s = RngStream::new(7).split(3);
        let a: Vec<f64> = (0..5).map({
            let mut g = s.generator();
            move |_| g.uniform()
        }).collect();
        let mut g = s.generator();
        let b: Vec<f64> = (0..5).map(|_| g.uniform()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn split_streams_differ_and_are_uncorrelated() {
        let root = RngStream::new(11);
        let (a, b) = (root.split(0), root.split(1));
        assert_ne!(a, b);
        assert_ne!(a.split(1), b.split(0));
        let n = 1_000_000;
        let (mut ga, mut gb) = (a.generator(), b.generator());
        let xs: Vec<f64> = (0..n).map(|_| ga.normal()).collect();
        let ys: Vec<f64> = (0..n).map(|_| gb.normal()).collect();
        let corr = pearson(&xs, &ys);
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut g = RngStream::new(1).generator();
        let mut p = g.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
