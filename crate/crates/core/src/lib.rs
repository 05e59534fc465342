//! Simulation and certification toolkit for regime-switching jump diffusion
//! processes `(X, Λ)` on `ℝ^d × {0, 1, 2, …}`.
//!
//! The continuous component `X` solves a stochastic differential-integral
//! equation driven by a Brownian motion and a finite-activity Poisson random
//! measure, with coefficients `b(x, k)`, `σ(x, k)`, `c(x, k, u)` frozen at the
//! current regime `k`. The regime component `Λ` switches at state-dependent
//! rates `q_kl(x)` confined to a band `|k − l| ≤ κ`.
//!
//! The crate provides:
//! * [`model`] — model definition, the switching-rate row/partition machinery,
//!   and probabilistic assumption validation;
//! * [`simulate`] — sample-path construction by interlacing regime-frozen
//!   Euler–Maruyama segments with integrated exponential switching clocks,
//!   plus reproducible parallel ensembles;
//! * [`generator`] — pointwise evaluation of the extended generator
//!   `𝒜 = ℒ_k + Q(x)`, Dynkin-formula residual experiments and the
//!   jump-count transition series for Gaussian-kernel regimes;
//! * [`coupling`] — the synchronous/basic coupling of two copies and
//!   empirical contraction / decoupling-probability estimates;
//! * [`measure_change`] — the constant-rate auxiliary chain, the
//!   Radon–Nikodym path weight and importance-sampled expectations;
//! * [`ergodicity`] — Foster–Lyapunov drift certification, linearized
//!   criteria at infinity and empirical convergence measurements.

pub mod coupling;
pub mod ergodicity;
pub mod error;
pub mod generator;
pub mod measure_change;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::ModelSpec;
pub use simulate::{HybridPath, SimConfig};
