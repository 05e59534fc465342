//! Hybrid-process model definition: coefficient functions, jump measure,
//! state-dependent rate matrix, and the switching partition machinery.

mod jump;
mod rates;

pub mod families;
pub mod validate;

pub use jump::{JumpMeasure, MarkLaw};
pub use rates::{RateMatrix, RateRow, SwitchPartition};
pub use validate::{AssumptionReport, BoundCheck, CheckStatus, Witness};

use std::sync::Arc;

use crate::error::{Error, Result};

type DriftFn = Arc<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;
type DiffusionFn = Arc<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;
type JumpCoeffFn = Arc<dyn Fn(&[f64], usize, &[f64], &mut [f64]) + Send + Sync>;
type KernelFn = Arc<dyn Fn(usize) -> Option<OuKernel> + Send + Sync>;

/// Closed-form Gaussian transition kernel of a one-dimensional
/// regime-frozen pure diffusion `dX = (alpha·X + offset) dt + sigma dB`.
/// Available only for models built from the linear families; it backs the
/// jump-count transition series.
#[derive(Debug, Clone, Copy)]
pub struct OuKernel {
    pub alpha: f64,
    pub offset: f64,
    pub sigma: f64,
}

impl OuKernel {
    /// Mean and variance of `X(s)` given `X(0) = x0`.
    pub fn mean_var(&self, x0: f64, s: f64) -> (f64, f64) {
        if self.alpha.abs() < 1e-14 {
            (x0 + self.offset * s, self.sigma * self.sigma * s)
        } else {
            let e = (self.alpha * s).exp();
            let mean = x0 * e + self.offset * (e - 1.0) / self.alpha;
            let var = self.sigma * self.sigma * (e * e - 1.0) / (2.0 * self.alpha);
            (mean, var)
        }
    }
}

/// Full description of a regime-switching jump diffusion.
///
/// Immutable after construction and safe to share across workers; every
/// evaluation is pure given its inputs.
#[derive(Clone)]
pub struct ModelSpec {
    dim: usize,
    drift: DriftFn,
    diffusion: DiffusionFn,
    jump_coeff: JumpCoeffFn,
    jump: JumpMeasure,
    rates: RateMatrix,
    growth_bound: Option<f64>,
    holder_exponent: Option<f64>,
    kernel: Option<KernelFn>,
    family: Option<String>,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("dim", &self.dim)
            .field("jump", &self.jump)
            .field("rates", &self.rates)
            .field("growth_bound", &self.growth_bound)
            .field("holder_exponent", &self.holder_exponent)
            .field("family", &self.family)
            .finish()
    }
}

pub struct ModelBuilder {
    dim: usize,
    drift: Option<DriftFn>,
    diffusion: Option<DiffusionFn>,
    jump_coeff: Option<JumpCoeffFn>,
    jump: JumpMeasure,
    rates: Option<RateMatrix>,
    growth_bound: Option<f64>,
    holder_exponent: Option<f64>,
    kernel: Option<KernelFn>,
    family: Option<String>,
}

impl ModelSpec {
    pub fn builder(dim: usize) -> ModelBuilder {
        ModelBuilder {
            dim,
            drift: None,
            diffusion: None,
            jump_coeff: None,
            jump: JumpMeasure::none(),
            rates: None,
            growth_bound: None,
            holder_exponent: None,
            kernel: None,
            family: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jump(&self) -> &JumpMeasure {
        &self.jump
    }

    pub fn rates(&self) -> &RateMatrix {
        &self.rates
    }

    pub fn kappa(&self) -> usize {
        self.rates.kappa()
    }

    pub fn growth_bound(&self) -> Option<f64> {
        self.growth_bound
    }

    pub fn holder_exponent(&self) -> Option<f64> {
        self.holder_exponent
    }

    pub fn family(&self) -> Option<&str> {
        self.family.as_deref()
    }

    /// The Gaussian kernel of regime `k`'s pure diffusion, when known in
    /// closed form.
    pub fn gauss_kernel(&self, k: usize) -> Option<OuKernel> {
        self.kernel.as_ref().and_then(|f| f(k))
    }

    pub fn drift_into(&self, x: &[f64], k: usize, out: &mut [f64]) {
        (self.drift)(x, k, out);
    }

    /// Diffusion matrix `σ(x,k)`, row-major `d × d`.
    pub fn diffusion_into(&self, x: &[f64], k: usize, out: &mut [f64]) {
        (self.diffusion)(x, k, out);
    }

    /// Jump displacement `c(x, k, u)`.
    pub fn jump_disp_into(&self, x: &[f64], k: usize, u: &[f64], out: &mut [f64]) {
        (self.jump_coeff)(x, k, u, out);
    }

    pub fn drift_vec(&self, x: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, k, &mut out);
        out
    }

    pub fn diffusion_mat(&self, x: &[f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.diffusion_into(x, k, &mut out);
        out
    }

    pub fn jump_disp(&self, x: &[f64], k: usize, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.jump_disp_into(x, k, u, &mut out);
        out
    }

    /// Off-diagonal rates from `(x, k)` plus their total `q_k(x)`.
    pub fn q_row(&self, x: &[f64], k: usize) -> Result<RateRow> {
        self.rates.row(x, k)
    }

    /// Total switching rate `q_k(x)`.
    pub fn q_total(&self, x: &[f64], k: usize) -> Result<f64> {
        Ok(self.rates.row(x, k)?.total)
    }

    /// The interval partition of `[0, q_k(x))` for `(x, k)`.
    pub fn partition(&self, x: &[f64], k: usize) -> Result<SwitchPartition> {
        self.rates.partition(x, k)
    }

    /// Displacement function: `l − k` when `r` falls in the interval for
    /// target `l`, zero otherwise.
    pub fn h_eval(&self, x: &[f64], k: usize, r: f64) -> Result<i64> {
        Ok(self.partition(x, k)?.displacement(r))
    }
}

impl ModelBuilder {
    pub fn drift(mut self, f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn diffusion(
        mut self,
        f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn jump_coeff(
        mut self,
        f: impl Fn(&[f64], usize, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jump_coeff = Some(Arc::new(f));
        self
    }

    pub fn jump_measure(mut self, jm: JumpMeasure) -> Self {
        self.jump = jm;
        self
    }

    pub fn rates(mut self, rm: RateMatrix) -> Self {
        self.rates = Some(rm);
        self
    }

    pub fn growth_bound(mut self, h: f64) -> Self {
        self.growth_bound = Some(h);
        self
    }

    pub fn holder_exponent(mut self, delta: f64) -> Self {
        self.holder_exponent = Some(delta);
        self
    }

    pub fn gauss_kernel(mut self, f: impl Fn(usize) -> Option<OuKernel> + Send + Sync + 'static) -> Self {
        self.kernel = Some(Arc::new(f));
        self
    }

    pub fn family_name(mut self, name: impl Into<String>) -> Self {
        self.family = Some(name.into());
        self
    }

    pub fn build(self) -> Result<ModelSpec> {
        if self.dim == 0 {
            return Err(Error::ModelDefinition("dimension must be positive".into()));
        }
        if let Some(delta) = self.holder_exponent {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(Error::ModelDefinition(format!(
                    "Hölder exponent must lie in (0, 1], got {delta}"
                )));
            }
        }
        let dim = self.dim;
        let zero_vec: DriftFn = Arc::new(|_x, _k, out: &mut [f64]| out.fill(0.0));
        let zero_mat: DiffusionFn = Arc::new(|_x, _k, out: &mut [f64]| out.fill(0.0));
        let zero_jump: JumpCoeffFn = Arc::new(|_x, _k, _u, out: &mut [f64]| out.fill(0.0));
        let model = ModelSpec {
            dim,
            drift: self.drift.unwrap_or(zero_vec),
            diffusion: self.diffusion.unwrap_or(zero_mat),
            jump_coeff: self.jump_coeff.unwrap_or(zero_jump),
            jump: self.jump,
            rates: self
                .rates
                .unwrap_or_else(|| RateMatrix::new(1, |_x, _k, _l| 0.0)),
            growth_bound: self.growth_bound,
            holder_exponent: self.holder_exponent,
            kernel: self.kernel,
            family: self.family,
        };
        model.probe_finiteness()?;
        Ok(model)
    }
}

impl ModelSpec {
    /// Evaluate the coefficients at a handful of finite probe points and
    /// reject non-finite values outright.
    fn probe_finiteness(&self) -> Result<()> {
        let d = self.dim;
        let mut probes = vec![vec![0.0; d], vec![1.0; d]];
        let mut neg = vec![-1.0; d];
        neg[0] = -2.0;
        probes.push(neg);
        let marks: Vec<Vec<f64>> = if self.jump.total_mass() > 0.0 {
            let mut r = crate::rng::StreamFactory::new(0).stream(0, crate::rng::StreamKind::Probe);
            (0..3).map(|_| self.jump.sample_mark(&mut r)).collect()
        } else {
            Vec::new()
        };
        let mut buf_v = vec![0.0; d];
        let mut buf_m = vec![0.0; d * d];
        for x in &probes {
            for k in 0..3usize {
                self.drift_into(x, k, &mut buf_v);
                if buf_v.iter().any(|v| !v.is_finite()) {
                    return Err(Error::ModelDefinition(format!(
                        "drift is non-finite at x={x:?}, k={k}"
                    )));
                }
                self.diffusion_into(x, k, &mut buf_m);
                if buf_m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::ModelDefinition(format!(
                        "diffusion is non-finite at x={x:?}, k={k}"
                    )));
                }
                for u in &marks {
                    self.jump_disp_into(x, k, u, &mut buf_v);
                    if buf_v.iter().any(|v| !v.is_finite()) {
                        return Err(Error::ModelDefinition(format!(
                            "jump coefficient is non-finite at x={x:?}, k={k}, u={u:?}"
                        )));
                    }
                }
                self.rates.row(x, k)?;
            }
        }
        Ok(())
    }
}

/// Euclidean norm.
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Squared Frobenius / Euclidean norm.
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>()
}
