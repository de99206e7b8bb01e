//! Multitaper spectral estimation for latent processes driving binary
//! spike-train observations.
//!
//! The observation model is an ensemble of Bernoulli spike trains whose
//! per-bin rate is `lambda_k = mu + x_k`, with `x_k` a zero-mean stationary
//! latent process. The estimator tapers the data through auxiliary spiking
//! statistics (one per dpss taper), fits each tapered eigen-spectrum by
//! EM with a Laplace-approximated E-step, and averages the eigen-spectra
//! into a multitaper PSD estimate.
//!
//! Module map:
//! - [`simulate`]: AR latent processes, Bernoulli spike generation, analytic
//!   AR spectra for benchmarking.
//! - [`dpss`] / [`tridiag`]: Slepian taper generation via the commuting
//!   symmetric tridiagonal matrix.
//! - [`mtm`]: classic tapered eigen-spectra and the multitaper average.
//! - [`aux_stats`]: auxiliary spiking statistics for signed tapers.
//! - [`spectral_model`]: harmonic design matrix, prior variances, PSD readout.
//! - [`em`]: per-taper maximum-likelihood eigen-spectrum estimation.
//! - [`pmtm`]: the end-to-end point-process multitaper estimator.
//! - [`baselines`]: PSTH-PSD and state-space PSD comparison estimators.
//! - [`metrics`] / [`experiment`]: normalized MSE and the simulation benchmark.

pub mod aux_stats;
pub mod baselines;
pub mod dpss;
pub mod em;
mod error;
pub mod experiment;
pub mod metrics;
pub mod mtm;
pub mod pmtm;
pub mod simulate;
pub mod spectral_model;
pub mod tridiag;

pub use error::{Error, Result};
