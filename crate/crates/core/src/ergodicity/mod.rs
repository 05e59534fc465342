//! Foster–Lyapunov drift certification and empirical ergodicity checks.
//!
//! A certificate witnesses `𝒜V(x,k) ≤ −α·V(x,k) + γ` at sampled points
//! of a probe region; it is a "pass at N samples" statement, not a proof.
//! Exponential ergodicity then holds with `f = V + 1` for models also
//! meeting the structural assumptions, which is probed empirically by the
//! convergence module.

mod convergence;
mod linearized;
mod ou_example;

pub use convergence::{empirical_convergence, ConvergenceOptions, ErgodicityReport};
pub use linearized::{
    check_linearized, jump_tail_constant, mu_i, LinearizedRegime, LinearizedReport, LinearizedSpec,
};
pub use ou_example::{ou_example_conditions, ConditionOutcome, OuConditionReport, OuExampleParams};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::{apply_generator, GeneratorOptions, TestFunction};
use crate::model::ModelSpec;
use crate::rng::{StreamFactory, StreamKind};

/// Uniform sampler over a centered box crossed with a regime range.
#[derive(Debug, Clone, Copy)]
pub struct RegionSampler {
    pub radius: f64,
    pub max_regime: usize,
}

impl RegionSampler {
    pub fn sample(&self, dim: usize, n: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
        let mut rng = StreamFactory::new(seed).stream(0, StreamKind::Probe);
        (0..n)
            .map(|_| {
                let x = (0..dim)
                    .map(|_| self.radius * (2.0 * rng.random::<f64>() - 1.0))
                    .collect();
                let k = (rng.random::<f64>() * (self.max_regime + 1) as f64) as usize;
                (x, k.min(self.max_regime))
            })
            .collect()
    }

    pub fn describe(&self) -> String {
        format!("|x|∞ ≤ {}, k ≤ {}", self.radius, self.max_regime)
    }
}

/// One evaluated drift sample.
#[derive(Debug, Clone)]
pub struct DriftSample {
    pub x: Vec<f64>,
    pub regime: usize,
    pub v: f64,
    pub av: f64,
    pub jump_se: f64,
}

/// Result of checking `𝒜V ≤ −αV + γ` over a sampled region.
#[derive(Debug, Clone)]
pub struct DriftCertificate {
    pub lyapunov: String,
    pub alpha: f64,
    pub gamma: f64,
    pub region: String,
    pub tolerance: f64,
    pub samples: Vec<DriftSample>,
    /// Indices into `samples` where the inequality fails beyond
    /// `tolerance + 3·jump_se`.
    pub violations: Vec<usize>,
}

impl DriftCertificate {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Sampled margin `𝒜V + αV − γ` (negative is good).
    pub fn margin(&self, idx: usize) -> f64 {
        let s = &self.samples[idx];
        s.av + self.alpha * s.v - self.gamma
    }

    pub fn worst_margin(&self) -> f64 {
        (0..self.samples.len())
            .map(|i| self.margin(i))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn summary(&self) -> String {
        if self.passed() {
            format!(
                "PASS at {} samples (alpha = {}, gamma = {}, worst margin {:.3e}, region {})",
                self.samples.len(),
                self.alpha,
                self.gamma,
                self.worst_margin(),
                self.region
            )
        } else {
            format!(
                "FAIL with {} violations out of {} samples (alpha = {}, gamma = {}, worst margin {:.3e})",
                self.violations.len(),
                self.samples.len(),
                self.alpha,
                self.gamma,
                self.worst_margin()
            )
        }
    }
}

/// Evaluate `𝒜V` at sampled points and record violations of
/// `𝒜V ≤ −αV + γ` beyond `tolerance + 3·jump_se`.
pub fn check_drift(
    model: &ModelSpec,
    v: &TestFunction,
    sampler: &RegionSampler,
    alpha: f64,
    gamma: f64,
    tolerance: f64,
    budget: usize,
    seed: u64,
) -> Result<DriftCertificate> {
    if !(alpha > 0.0) || gamma < 0.0 {
        return Err(Error::InvalidConfig(
            "drift-check: need alpha > 0 and gamma ≥ 0".into(),
        ));
    }
    let points = sampler.sample(model.dim(), budget, seed);
    let factory = StreamFactory::new(seed);
    let opts = GeneratorOptions {
        mark_budget: 4_096,
    };
    let samples: Vec<Result<DriftSample>> = points
        .par_iter()
        .enumerate()
        .map(|(i, (x, k))| {
            let mut rng = factory.stream(i as u64, StreamKind::Marks);
            let gv = apply_generator(model, v, x, *k, &opts, &mut rng)?;
            Ok(DriftSample {
                x: x.clone(),
                regime: *k,
                v: v.eval(x, *k),
                av: gv.total(),
                jump_se: gv.jump_se,
            })
        })
        .collect();
    let samples: Result<Vec<DriftSample>> = samples.into_iter().collect();
    let samples = samples?;
    let violations = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.av + alpha * s.v - gamma > tolerance + 3.0 * s.jump_se)
        .map(|(i, _)| i)
        .collect();
    Ok(DriftCertificate {
        lyapunov: v.name().to_string(),
        alpha,
        gamma,
        region: sampler.describe(),
        tolerance,
        samples,
        violations,
    })
}

/// Envelope search for the best `(α, γ)` over a logarithmic α grid:
/// `γ(α) = max over samples of (𝒜V + αV)`; the largest α whose γ stays
/// under the cap wins. Deterministic given the samples.
pub fn fit_drift(
    samples: &[DriftSample],
    alpha_grid: (f64, f64, usize),
    gamma_cap: f64,
) -> Result<Option<(f64, f64)>> {
    if samples.len() < 10 {
        return Err(Error::InvalidConfig(
            "drift-fit: need at least 10 samples".into(),
        ));
    }
    let (lo, hi, n) = alpha_grid;
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::InvalidConfig("drift-fit: bad alpha grid".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n {
        let alpha = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
        let gamma = samples
            .iter()
            .map(|s| s.av + alpha * s.v)
            .fold(f64::NEG_INFINITY, f64::max);
        if gamma.is_finite() && gamma <= gamma_cap {
            best = Some((alpha, gamma.max(0.0)));
        }
    }
    Ok(best)
}
