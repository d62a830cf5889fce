//! Low-light raw noise synthesis and evaluation.
//!
//! Noise is split into two parts. The signal-dependent part is photon shot
//! noise, sampled exactly from a scaled Poisson law. The signal-independent
//! part is produced by a learned U-shaped generator driven by an
//! ISO-conditioned Gaussian noise map and trained adversarially against a
//! multi-scale Fourier transformer critic.
//!
//! Module map:
//!
//! * [`raw`]: packed Bayer patches, sensor profiles, the LRF container.
//! * [`sim`]: physics samplers, the parametric oracle sensor, baselines, PTC calibration.
//! * [`autodiff`]: dense tensors and a reverse-mode tape.
//! * [`nn`]: transformer, Fourier transformer and convolution blocks.
//! * [`models`]: generator, discriminators, denoiser and checkpoints.
//! * [`train`]: losses, Adam, cosine schedule, training loops.
//! * [`metrics`]: residual histograms, KLD/AKLD, PSNR, SSIM.
//! * [`cli`]: the experiment commands behind the `lownoise` binary.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod raw;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
