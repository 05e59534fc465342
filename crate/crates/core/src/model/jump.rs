//! Finite-activity jump (mark) measures `Π` on the mark space `U ⊆ ℝ^m`.
//!
//! A measure is described by its total mass `Π(U)` and the normalized mark
//! law `Π(·)/Π(U)`. Integration `∫ g dΠ` goes through deterministic
//! quadrature whenever the law is one of the built-in one-dimensional
//! densities, and through Monte Carlo with a declared sample budget for
//! custom samplers.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::numerics::{integrate_exp_halfline, integrate_gl};

type MarkSampler = Arc<dyn Fn(&mut ChaCha12Rng) -> Vec<f64> + Send + Sync>;

/// Normalized mark law `Π(·)/Π(U)`.
#[derive(Clone)]
pub enum MarkLaw {
    /// Density `(1/2s)·e^{−|z|/s}` on ℝ.
    TwoSidedExponential { scale: f64 },
    /// Gaussian marks on ℝ.
    Normal { mean: f64, sd: f64 },
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Atoms `(u, p)` with probabilities summing to one.
    Discrete { atoms: Vec<(Vec<f64>, f64)> },
    /// Arbitrary sampler; integrals fall back to Monte Carlo.
    Custom { dim: usize, sampler: MarkSampler },
}

impl std::fmt::Debug for MarkLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarkLaw::TwoSidedExponential { scale } => {
                write!(f, "TwoSidedExponential {{ scale: {scale} }}")
            }
            MarkLaw::Normal { mean, sd } => write!(f, "Normal {{ mean: {mean}, sd: {sd} }}"),
            MarkLaw::Uniform { lo, hi } => write!(f, "Uniform {{ lo: {lo}, hi: {hi} }}"),
            MarkLaw::Discrete { atoms } => write!(f, "Discrete {{ atoms: {} }}", atoms.len()),
            MarkLaw::Custom { dim, .. } => write!(f, "Custom {{ dim: {dim} }}"),
        }
    }
}

const GL_ORDER: usize = 64;

/// A finite-activity jump measure with sampling and integration access.
#[derive(Clone, Debug)]
pub struct JumpMeasure {
    total_mass: f64,
    law: MarkLaw,
    compensated: bool,
}

impl JumpMeasure {
    /// No jumps at all (`Π(U) = 0`); a pure regime-switching diffusion.
    pub fn none() -> Self {
        Self {
            total_mass: 0.0,
            law: MarkLaw::Discrete {
                atoms: vec![(vec![0.0], 1.0)],
            },
            compensated: false,
        }
    }

    pub fn new(total_mass: f64, law: MarkLaw) -> Result<Self> {
        if !(total_mass.is_finite() && total_mass >= 0.0) {
            return Err(Error::ModelDefinition(format!(
                "jump measure total mass must be finite and nonnegative, got {total_mass}"
            )));
        }
        if let MarkLaw::Discrete { atoms } = &law {
            let p: f64 = atoms.iter().map(|(_, p)| *p).sum();
            if atoms.is_empty() || (p - 1.0).abs() > 1e-9 || atoms.iter().any(|(_, p)| *p < 0.0) {
                return Err(Error::ModelDefinition(
                    "discrete mark law must have nonnegative probabilities summing to 1".into(),
                ));
            }
        }
        Ok(Self {
            total_mass,
            law,
            compensated: false,
        })
    }

    /// Marks this measure as the finite truncation of a σ-finite measure:
    /// the simulator subtracts the compensator drift `∫ c(x,k,u) Π(du)`
    /// so the truncated small jumps enter in compensated form.
    pub fn compensated(mut self) -> Self {
        self.compensated = true;
        self
    }

    pub fn is_compensated(&self) -> bool {
        self.compensated
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn mark_dim(&self) -> usize {
        match &self.law {
            MarkLaw::TwoSidedExponential { .. } | MarkLaw::Normal { .. } | MarkLaw::Uniform { .. } => 1,
            MarkLaw::Discrete { atoms } => atoms[0].0.len(),
            MarkLaw::Custom { dim, .. } => *dim,
        }
    }

    pub fn law(&self) -> &MarkLaw {
        &self.law
    }

    /// True when `∫ g dΠ` is evaluated by deterministic quadrature.
    pub fn has_quadrature(&self) -> bool {
        !matches!(self.law, MarkLaw::Custom { .. })
    }

    /// Draw one mark from the normalized law `Π(·)/Π(U)`.
    pub fn sample_mark(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        match &self.law {
            MarkLaw::TwoSidedExponential { scale } => {
                let e: f64 = -rng.random::<f64>().max(f64::MIN_POSITIVE).ln();
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                vec![sign * scale * e]
            }
            MarkLaw::Normal { mean, sd } => {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                vec![mean + sd * z]
            }
            MarkLaw::Uniform { lo, hi } => vec![lo + (hi - lo) * rng.random::<f64>()],
            MarkLaw::Discrete { atoms } => {
                let mut u: f64 = rng.random();
                for (atom, p) in atoms {
                    if u < *p {
                        return atom.clone();
                    }
                    u -= p;
                }
                atoms.last().unwrap().0.clone()
            }
            MarkLaw::Custom { sampler, .. } => sampler(rng),
        }
    }

    /// Estimate `∫ g(u) Π(du)`. Returns `(value, standard_error)`;
    /// the standard error is zero for quadrature-backed laws.
    pub fn integrate(
        &self,
        g: &dyn Fn(&[f64]) -> f64,
        mc_budget: usize,
        rng: &mut ChaCha12Rng,
    ) -> (f64, f64) {
        if self.total_mass == 0.0 {
            return (0.0, 0.0);
        }
        let mass = self.total_mass;
        match &self.law {
            MarkLaw::TwoSidedExponential { scale } => {
                let s = *scale;
                // E[g] = ½ ∫₀^∞ [g(s·z) + g(−s·z)] e^{−z} dz
                let v = 0.5
                    * integrate_exp_halfline(|z| g(&[s * z]) + g(&[-s * z]), GL_ORDER);
                (mass * v, 0.0)
            }
            MarkLaw::Normal { mean, sd } => {
                let inv = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sd);
                let v = integrate_gl(
                    |z| g(&[z]) * inv * (-0.5 * ((z - mean) / sd).powi(2)).exp(),
                    mean - 10.0 * sd,
                    mean + 10.0 * sd,
                    96,
                );
                (mass * v, 0.0)
            }
            MarkLaw::Uniform { lo, hi } => {
                let w = 1.0 / (hi - lo);
                let v = integrate_gl(|z| g(&[z]) * w, *lo, *hi, GL_ORDER);
                (mass * v, 0.0)
            }
            MarkLaw::Discrete { atoms } => {
                let v: f64 = atoms.iter().map(|(u, p)| p * g(u)).sum();
                (mass * v, 0.0)
            }
            MarkLaw::Custom { sampler, .. } => {
                let n = mc_budget.max(2);
                let mut acc = crate::numerics::Welford::default();
                for _ in 0..n {
                    acc.push(g(&sampler(rng)));
                }
                (mass * acc.mean(), mass * acc.std_error())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamFactory, StreamKind};

    fn rng() -> ChaCha12Rng {
        StreamFactory::new(7).stream(0, StreamKind::Marks)
    }

    #[test]
    fn two_sided_exponential_second_moment_is_two() {
        // ∫ z² · ½e^{−|z|} dz = 2
        let jm = JumpMeasure::new(1.0, MarkLaw::TwoSidedExponential { scale: 1.0 }).unwrap();
        let (v, se) = jm.integrate(&|u| u[0] * u[0], 0, &mut rng());
        assert_eq!(se, 0.0);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn two_sided_exponential_first_moment_is_zero() {
        let jm = JumpMeasure::new(3.0, MarkLaw::TwoSidedExponential { scale: 1.0 }).unwrap();
        let (v, _) = jm.integrate(&|u| u[0], 0, &mut rng());
        assert!(v.abs() < 1e-9, "{v}");
    }

    #[test]
    fn zero_mass_is_pure_switching_diffusion() {
        let jm = JumpMeasure::none();
        assert_eq!(jm.total_mass(), 0.0);
        let (v, se) = jm.integrate(&|_| 1.0e9, 0, &mut rng());
        assert_eq!((v, se), (0.0, 0.0));
    }

    #[test]
    fn sampler_matches_law_moments() {
        let jm = JumpMeasure::new(1.0, MarkLaw::TwoSidedExponential { scale: 1.0 }).unwrap();
        let mut r = rng();
        let n = 200_000;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for _ in 0..n {
            let u = jm.sample_mark(&mut r)[0];
            m1 += u;
            m2 += u * u;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        // Var(z) = 2 for the standard two-sided exponential
        assert!(m1.abs() < 0.02, "{m1}");
        assert!((m2 - 2.0).abs() < 0.06, "{m2}");
    }

    #[test]
    fn discrete_law_integrates_exactly() {
        let jm = JumpMeasure::new(
            2.0,
            MarkLaw::Discrete {
                atoms: vec![(vec![1.0], 0.25), (vec![-1.0], 0.75)],
            },
        )
        .unwrap();
        let (v, se) = jm.integrate(&|u| u[0], 0, &mut rng());
        assert_eq!(se, 0.0);
        assert!((v - 2.0 * (0.25 - 0.75)).abs() < 1e-15);
    }
}
