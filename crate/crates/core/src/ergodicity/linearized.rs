//! The linearized-at-infinity sufficient conditions: per-regime matrices
//! `b(i)`, `σ_j(i)`, the jump tail constant `ĉ_i`, the spectral quantity
//! `μ_i = λ_max((b(i)+b(i)')/2 + Σ_j σ_j(i)σ_j(i)') + ĉ_i`, and the
//! weighted rate inequality `Σ_j q_ij(x) g_j + p(α + μ_i) g_i ≤ 0`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::max_symmetric_eigenvalue;
use crate::rng::{StreamFactory, StreamKind};

/// Per-regime linearization data.
#[derive(Debug, Clone)]
pub struct LinearizedRegime {
    /// Drift matrix `b(i)`, row-major `d × d`.
    pub drift: Vec<f64>,
    /// Diffusion column matrices `σ_j(i)`, each row-major `d × d`.
    pub sigmas: Vec<Vec<f64>>,
    /// Jump tail constant `ĉ_i`.
    pub jump_tail: f64,
}

/// Inputs of the linearized criterion.
#[derive(Debug, Clone)]
pub struct LinearizedSpec {
    pub dim: usize,
    pub regimes: Vec<LinearizedRegime>,
    /// Power `p ∈ (0, 2)` of the Lyapunov function `g_i |x|^p`.
    pub p: f64,
    /// Positive weights `g_i`, for the truncated regime set plus its
    /// κ-neighborhood; conceptually `g_i → ∞`.
    pub weights: Vec<f64>,
    /// Decay rate candidate `α > 0`.
    pub alpha: f64,
    /// Probe radius standing in for "sufficiently large |x|".
    pub radius: f64,
}

impl LinearizedSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 2.0) {
            return Err(Error::InvalidConfig("linearized: p must lie in (0, 2)".into()));
        }
        if self.weights.iter().any(|g| *g <= 0.0) {
            return Err(Error::InvalidConfig("linearized: weights must be positive".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig("linearized: alpha must be positive".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if r.drift.len() != self.dim * self.dim
                || r.sigmas.iter().any(|s| s.len() != self.dim * self.dim)
            {
                return Err(Error::InvalidConfig(format!(
                    "linearized: regime {i} matrix dimensions do not match d = {}",
                    self.dim
                )));
            }
            if r.drift.iter().any(|v| !v.is_finite())
                || r.sigmas.iter().flatten().any(|v| !v.is_finite())
                || !r.jump_tail.is_finite()
            {
                return Err(Error::ModelDefinition(format!(
                    "linearized: regime {i} has non-finite entries"
                )));
            }
        }
        Ok(())
    }
}

/// `μ_i = λ_max((b(i) + b(i)')/2 + Σ_j σ_j(i) σ_j(i)') + ĉ_i`.
pub fn mu_i(spec: &LinearizedSpec, i: usize) -> Result<f64> {
    spec.validate()?;
    let d = spec.dim;
    let reg = spec
        .regimes
        .get(i)
        .ok_or_else(|| Error::InvalidConfig(format!("linearized: no regime {i}")))?;
    let mut m = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            m[r * d + c] = 0.5 * (reg.drift[r * d + c] + reg.drift[c * d + r]);
        }
    }
    for sigma in &reg.sigmas {
        for r in 0..d {
            for c in 0..d {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += sigma[r * d + t] * sigma[c * d + t];
                }
                m[r * d + c] += acc;
            }
        }
    }
    Ok(max_symmetric_eigenvalue(&m, d) + reg.jump_tail)
}

/// Estimate the jump tail constant
/// `ĉ_i = sup_{|x| = radius} ∫ (|x + c(x,i,u)|^p / |x|^p − 1) Π(du)`
/// over sampled directions; returns the estimate and the Monte Carlo
/// standard error of the winning direction (zero under quadrature).
pub fn jump_tail_constant(
    model: &ModelSpec,
    i: usize,
    p: f64,
    radius: f64,
    budget: usize,
    n_directions: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::InvalidConfig("jump-tail: p must lie in (0, 2)".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidConfig("jump-tail: radius must be positive".into()));
    }
    let d = model.dim();
    let mut rng = StreamFactory::new(seed).stream(7, StreamKind::Probe);
    let mut best = f64::NEG_INFINITY;
    let mut best_se = 0.0;
    let dirs = if d == 1 { 2 } else { n_directions.max(2) };
    for dir in 0..dirs {
        let x: Vec<f64> = if d == 1 {
            vec![if dir == 0 { radius } else { -radius }]
        } else {
            // uniform direction by normalized Gaussian
            let mut v: Vec<f64> = (0..d)
                .map(|_| {
                    let u: f64 =
                        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    u
                })
                .collect();
            let n = crate::model::norm(&v).max(1e-300);
            for vi in v.iter_mut() {
                *vi *= radius / n;
            }
            v
        };
        let xn = crate::model::norm(&x);
        let (val, se) = model.jump().integrate(
            &|u| {
                let c = model.jump_disp(&x, i, u);
                let shifted: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a + b).collect();
                (crate::model::norm(&shifted) / xn).powf(p) - 1.0
            },
            budget,
            &mut rng,
        );
        if val > best {
            best = val;
            best_se = se;
        }
    }
    let _ = rng.random::<u64>();
    Ok((best, best_se))
}

/// Outcome of the weighted rate inequality check.
#[derive(Debug, Clone)]
pub struct LinearizedReport {
    pub pass: bool,
    /// Most positive margin `Σ_j q_ij(x) g_j + p(α + μ_i) g_i` observed.
    pub worst_margin: f64,
    pub worst_regime: usize,
    pub worst_point: Vec<f64>,
    pub regimes_checked: usize,
}

/// Verify `Σ_j q_ij(x) g_j + p(α + μ_i) g_i ≤ 0` for every probe point
/// and every regime the weight truncation covers, leaving a κ-wide
/// boundary layer. Errors out if the band reaches past the supplied
/// weights.
pub fn check_linearized(
    spec: &LinearizedSpec,
    model: &ModelSpec,
    probes: &[Vec<f64>],
) -> Result<LinearizedReport> {
    spec.validate()?;
    if probes.is_empty() {
        return Err(Error::InvalidConfig("linearized: need probe points".into()));
    }
    let kappa = model.kappa();
    if spec.weights.len() <= kappa {
        return Err(Error::InvalidConfig(
            "linearized: weight truncation smaller than the band".into(),
        ));
    }
    let interior = spec.weights.len() - kappa;
    if spec.regimes.len() < interior {
        return Err(Error::InvalidConfig(format!(
            "linearized: need linearization data for the {interior} interior regimes"
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_regime = 0;
    let mut worst_point = probes[0].clone();
    for i in 0..interior {
        let mu = mu_i(spec, i)?;
        for x in probes {
            let row = model.q_row(x, i)?;
            let mut sum = -row.total * spec.weights[i];
            for (l, rate) in &row.entries {
                let gl = spec.weights.get(*l).ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "linearized: truncation too small, regime {i} reaches {l} \
                         past the supplied weights"
                    ))
                })?;
                sum += rate * gl;
            }
            let margin = sum + spec.p * (spec.alpha + mu) * spec.weights[i];
            if margin > worst {
                worst = margin;
                worst_regime = i;
                worst_point = x.clone();
            }
        }
    }
    Ok(LinearizedReport {
        pass: worst <= 1e-12,
        worst_margin: worst,
        worst_regime,
        worst_point,
        regimes_checked: interior,
    })
}
