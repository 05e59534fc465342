//! Test functions `f(x, k)` with optional analytic derivatives and a
//! small registry of named families for config-driven selection.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
type VecFn = Arc<dyn Fn(&[f64], usize) -> Vec<f64> + Send + Sync>;

/// A scalar test function with optional analytic gradient and Hessian;
/// missing derivatives fall back to central finite differences with step
/// `max(1e−5, 1e−5·|x_i|)` per coordinate.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    f: ScalarFn,
    grad: Option<VecFn>,
    hess: Option<VecFn>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TestFunction({})", self.name)
    }
}

fn fd_step(xi: f64) -> f64 {
    (1e-5 * xi.abs()).max(1e-5)
}

impl TestFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            grad: None,
            hess: None,
        }
    }

    pub fn with_grad(mut self, g: impl Fn(&[f64], usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_hess(mut self, h: impl Fn(&[f64], usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(h));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64], k: usize) -> f64 {
        (self.f)(x, k)
    }

    /// Analytic gradient when supplied, otherwise central differences.
    pub fn grad(&self, x: &[f64], k: usize) -> Vec<f64> {
        if let Some(g) = &self.grad {
            return g(x, k);
        }
        let d = x.len();
        let mut out = vec![0.0; d];
        let mut xp = x.to_vec();
        for i in 0..d {
            let h = fd_step(x[i]);
            xp[i] = x[i] + h;
            let fp = (self.f)(&xp, k);
            xp[i] = x[i] - h;
            let fm = (self.f)(&xp, k);
            xp[i] = x[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    /// Analytic Hessian when supplied, otherwise central differences
    /// (row-major `d × d`).
    pub fn hess(&self, x: &[f64], k: usize) -> Vec<f64> {
        if let Some(h) = &self.hess {
            return h(x, k);
        }
        self.hess_fd_auto(x, k)
    }

    /// Central-difference Hessian with an explicit step (used by the
    /// step-scan consistency checks).
    pub fn hess_fd(&self, x: &[f64], k: usize, step: f64) -> Vec<f64> {
        self.hess_fd_impl(x, k, |_| step)
    }

    fn hess_fd_auto(&self, x: &[f64], k: usize) -> Vec<f64> {
        self.hess_fd_impl(x, k, fd_step)
    }

    fn hess_fd_impl(&self, x: &[f64], k: usize, step_of: impl Fn(f64) -> f64) -> Vec<f64> {
        let d = x.len();
        let f0 = (self.f)(x, k);
        let mut out = vec![0.0; d * d];
        let mut xs = x.to_vec();
        for i in 0..d {
            let hi = step_of(x[i]);
            xs[i] = x[i] + hi;
            let fp = (self.f)(&xs, k);
            xs[i] = x[i] - hi;
            let fm = (self.f)(&xs, k);
            xs[i] = x[i];
            out[i * d + i] = (fp - 2.0 * f0 + fm) / (hi * hi);
            for j in (i + 1)..d {
                let hj = step_of(x[j]);
                xs[i] = x[i] + hi;
                xs[j] = x[j] + hj;
                let fpp = (self.f)(&xs, k);
                xs[j] = x[j] - hj;
                let fpm = (self.f)(&xs, k);
                xs[i] = x[i] - hi;
                let fmm = (self.f)(&xs, k);
                xs[j] = x[j] + hj;
                let fmp = (self.f)(&xs, k);
                xs[i] = x[i];
                xs[j] = x[j];
                let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        out
    }

    // ---- named constructors -------------------------------------------

    pub fn constant(value: f64) -> Self {
        Self::new("constant", move |_x, _k| value)
            .with_grad(|x: &[f64], _k| vec![0.0; x.len()])
            .with_hess(|x: &[f64], _k| vec![0.0; x.len() * x.len()])
    }

    /// `f(x, k) = k`.
    pub fn regime() -> Self {
        Self::new("regime", |_x, k| k as f64)
            .with_grad(|x: &[f64], _k| vec![0.0; x.len()])
            .with_hess(|x: &[f64], _k| vec![0.0; x.len() * x.len()])
    }

    /// `f(x, k) = |x|²`.
    pub fn norm_sq() -> Self {
        Self::new("norm-sq", |x: &[f64], _k| x.iter().map(|v| v * v).sum())
            .with_grad(|x: &[f64], _k| x.iter().map(|v| 2.0 * v).collect())
            .with_hess(|x: &[f64], _k| {
                let d = x.len();
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    h[i * d + i] = 2.0;
                }
                h
            })
    }

    /// The worked example's Lyapunov function `V(x, k) = (k+1)|x|²`.
    pub fn regime_weighted_norm_sq() -> Self {
        Self::new("regime-weighted-norm-sq", |x: &[f64], k| {
            (k as f64 + 1.0) * x.iter().map(|v| v * v).sum::<f64>()
        })
        .with_grad(|x: &[f64], k| x.iter().map(|v| 2.0 * (k as f64 + 1.0) * v).collect())
        .with_hess(|x: &[f64], k| {
            let d = x.len();
            let mut h = vec![0.0; d * d];
            for i in 0..d {
                h[i * d + i] = 2.0 * (k as f64 + 1.0);
            }
            h
        })
    }

    /// Coordinate projection `f(x, k) = x_i`.
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("coordinate-{i}"), move |x: &[f64], _k| x[i])
            .with_grad(move |x: &[f64], _k| {
                let mut g = vec![0.0; x.len()];
                g[i] = 1.0;
                g
            })
            .with_hess(|x: &[f64], _k| vec![0.0; x.len() * x.len()])
    }

    /// Smoothly clipped version of `self`: multiplied by a C² cutoff that
    /// is 1 on `|x| ≤ r1` and 0 on `|x| ≥ r2`, making unbounded test
    /// functions compactly supported for Dynkin experiments.
    pub fn smooth_clip(self, r1: f64, r2: f64) -> Self {
        assert!(r2 > r1 && r1 > 0.0);
        let inner = self.f.clone();
        let name = format!("{}-clipped[{r1},{r2}]", self.name);
        Self::new(name, move |x: &[f64], k| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            inner(x, k) * cutoff((r - r1) / (r2 - r1))
        })
    }
}

/// Quintic smoothstep complement: 1 at u ≤ 0, 0 at u ≥ 1, C² across.
fn cutoff(u: f64) -> f64 {
    if u <= 0.0 {
        1.0
    } else if u >= 1.0 {
        0.0
    } else {
        1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }
}

/// Look up a registered test-function family by name and parameters.
pub fn by_name(name: &str, params: &BTreeMap<String, f64>) -> Result<TestFunction> {
    let get = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("test function {name:?} needs parameter {key:?}")))
    };
    let base = match name {
        "constant" => TestFunction::constant(params.get("value").copied().unwrap_or(1.0)),
        "regime" => TestFunction::regime(),
        "norm-sq" => TestFunction::norm_sq(),
        "regime-weighted-norm-sq" => TestFunction::regime_weighted_norm_sq(),
        "coordinate" => TestFunction::coordinate(params.get("index").copied().unwrap_or(0.0) as usize),
        "clipped-norm-sq" => TestFunction::norm_sq().smooth_clip(get("r1")?, get("r2")?),
        "clipped-regime-weighted-norm-sq" => {
            TestFunction::regime_weighted_norm_sq().smooth_clip(get("r1")?, get("r2")?)
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown test function {other:?}"
            )))
        }
    };
    Ok(base)
}

/// Names accepted by [`by_name`].
pub fn registered_names() -> Vec<&'static str> {
    vec![
        "constant",
        "regime",
        "norm-sq",
        "regime-weighted-norm-sq",
        "coordinate",
        "clipped-norm-sq",
        "clipped-regime-weighted-norm-sq",
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_derivatives_match_analytic_quadratic() {
        let f = TestFunction::regime_weighted_norm_sq();
        let fd = TestFunction::new("same", |x: &[f64], k| {
            (k as f64 + 1.0) * x.iter().map(|v| v * v).sum::<f64>()
        });
        let x = [0.7, -1.4];
        for k in [0usize, 3] {
            let (ga, gf) = (f.grad(&x, k), fd.grad(&x, k));
            for (a, b) in ga.iter().zip(&gf) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
            let (ha, hf) = (f.hess(&x, k), fd.hess(&x, k));
            for (a, b) in ha.iter().zip(&hf) {
                assert!((a - b).abs() < 1e-3, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn clip_is_identity_inside_and_zero_outside() {
        let f = TestFunction::norm_sq().smooth_clip(2.0, 4.0);
        assert_eq!(f.eval(&[1.0], 0), 1.0);
        assert_eq!(f.eval(&[5.0], 0), 0.0);
        let mid = f.eval(&[3.0], 0);
        assert!(mid > 0.0 && mid < 9.0);
    }

    #[test]
    fn registry_round_trip() {
        let mut p = BTreeMap::new();
        p.insert("r1".to_string(), 2.0);
        p.insert("r2".to_string(), 4.0);
        let f = by_name("clipped-norm-sq", &p).unwrap();
        assert_eq!(f.eval(&[1.0], 0), 1.0);
        assert!(by_name("no-such", &p).is_err());
    }
}
