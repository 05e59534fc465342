//! Python bindings: model construction, path simulation, generator
//! evaluation, coupling, change-of-measure estimation and drift
//! certification, returning plain dicts and lists.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use rsjd_core::coupling::contraction_estimate;
use rsjd_core::ergodicity::{check_drift, RegionSampler};
use rsjd_core::generator::{
    apply_generator, dynkin_residual, test_functions, transition_series, DynkinOptions,
    GeneratorOptions,
};
use rsjd_core::measure_change::{build_qhat, weighted_expectation};
use rsjd_core::model::families;
use rsjd_core::model::validate::{probe_cloud, validate_assumptions, CheckStatus};
use rsjd_core::rng::{StreamFactory, StreamKind};
use rsjd_core::simulate::{simulate_batch, simulate_hybrid, BatchOptions, SimConfig};
use rsjd_core::ModelSpec;

fn core_err(e: rsjd_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn function_by_name(
    name: &str,
    params: Option<BTreeMap<String, f64>>,
) -> PyResult<rsjd_core::generator::TestFunction> {
    test_functions::by_name(name, &params.unwrap_or_default()).map_err(core_err)
}

fn sim_config(t: f64, dt: f64, seed: u64, guard: f64, ceiling: usize) -> SimConfig {
    SimConfig::new(t, dt)
        .with_seed(seed)
        .with_guard(guard)
        .with_ceiling(ceiling)
}

/// A regime-switching jump diffusion model.
#[pyclass]
struct Model {
    inner: ModelSpec,
}

#[pymethods]
impl Model {
    /// Build from the TOML `[model]` section text used by the CLI.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let cfg: families::ModelConfig = toml::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("model config: {e}")))?;
        Ok(Self {
            inner: families::build_model(&cfg).map_err(core_err)?,
        })
    }

    /// The worked coupled Ornstein-Uhlenbeck instance with
    /// nearest-neighbor rates `up`/`down`.
    #[staticmethod]
    #[pyo3(signature = (up = 1.0, down = 1.0))]
    fn coupled_ou_instance(up: f64, down: f64) -> Self {
        Self {
            inner: families::coupled_ou_instance(up, down),
        }
    }

    /// Single-regime OU with jumps: `b = alpha·x`, constant `sigma`,
    /// `c = beta·u`, two-sided exponential marks with the given mass.
    #[staticmethod]
    #[pyo3(signature = (alpha, sigma, beta = 0.0, mass = 0.0))]
    fn single_regime_ou(alpha: f64, sigma: f64, beta: f64, mass: f64) -> Self {
        Self {
            inner: families::single_regime_ou(alpha, sigma, beta, mass),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kappa(&self) -> usize {
        self.inner.kappa()
    }

    /// Off-diagonal switching rates from `(x, k)` and their total.
    fn q_row<'py>(&self, py: Python<'py>, x: Vec<f64>, k: usize) -> PyResult<Bound<'py, PyDict>> {
        let row = self.inner.q_row(&x, k).map_err(core_err)?;
        let out = PyDict::new(py);
        let rates = PyDict::new(py);
        for (l, r) in &row.entries {
            rates.set_item(l, r)?;
        }
        out.set_item("rates", rates)?;
        out.set_item("total", row.total)?;
        Ok(out)
    }

    /// Interval partition of `[0, q_k(x))` as `(target, start, end)`.
    fn partition(&self, x: Vec<f64>, k: usize) -> PyResult<Vec<(usize, f64, f64)>> {
        Ok(self.inner.partition(&x, k).map_err(core_err)?.intervals)
    }

    /// Regime displacement encoded at clock coordinate `r`.
    fn h_eval(&self, x: Vec<f64>, k: usize, r: f64) -> PyResult<i64> {
        self.inner.h_eval(&x, k, r).map_err(core_err)
    }

    /// Probe the structural assumption bounds; returns per-bound status.
    #[pyo3(signature = (probes = 200, radius = 10.0, max_regime = 8, tolerance = 1e-9))]
    fn validate<'py>(
        &self,
        py: Python<'py>,
        probes: usize,
        radius: f64,
        max_regime: usize,
        tolerance: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let points = probe_cloud(self.inner.dim(), radius, max_regime, probes);
        let report = validate_assumptions(&self.inner, &points, tolerance);
        let out = PyDict::new(py);
        for check in &report.checks {
            let status = match check.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::Unknown => "unknown",
            };
            let entry = PyDict::new(py);
            entry.set_item("status", status)?;
            entry.set_item("worst_ratio", check.worst_ratio)?;
            out.set_item(check.name, entry)?;
        }
        out.set_item("all_pass", report.all_pass())?;
        Ok(out)
    }

    /// Simulate one hybrid path by the interlacing construction.
    #[pyo3(signature = (x0, k0, t, dt, seed = 0, path_index = 0, guard_radius = 1e6, regime_ceiling = 10_000))]
    #[allow(clippy::too_many_arguments)]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        k0: usize,
        t: f64,
        dt: f64,
        seed: u64,
        path_index: u64,
        guard_radius: f64,
        regime_ceiling: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = sim_config(t, dt, seed, guard_radius, regime_ceiling);
        let path = simulate_hybrid(&self.inner, &x0, k0, &cfg, path_index).map_err(core_err)?;
        let out = PyDict::new(py);
        out.set_item("times", &path.times)?;
        let states = PyList::empty(py);
        for i in 0..path.len() {
            states.append(path.state(i).to_vec())?;
        }
        out.set_item("states", states)?;
        out.set_item("regimes", &path.regimes)?;
        let switches: Vec<(f64, usize, usize)> = path
            .switches
            .iter()
            .map(|s| (s.time, s.from, s.to))
            .collect();
        out.set_item("switches", switches)?;
        let jumps: Vec<(f64, Vec<f64>, Vec<f64>)> = path
            .jumps
            .iter()
            .map(|j| (j.time, j.mark.clone(), j.displacement.clone()))
            .collect();
        out.set_item("jumps", jumps)?;
        out.set_item("status", path.status.tag())?;
        Ok(out)
    }

    /// Ensemble statistics over independent paths.
    #[pyo3(signature = (x0, k0, t, dt, n, seed = 0, checkpoints = 10, burn_in = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn simulate_batch<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        k0: usize,
        t: f64,
        dt: f64,
        n: usize,
        seed: u64,
        checkpoints: usize,
        burn_in: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = sim_config(t, dt, seed, 1e6, 10_000).with_paths(n);
        let opts = BatchOptions::evenly_spaced(t, checkpoints).with_burn_in(burn_in);
        let stats = simulate_batch(&self.inner, &x0, k0, &cfg, &opts).map_err(core_err)?;
        let out = PyDict::new(py);
        out.set_item("checkpoints", stats.checkpoints)?;
        out.set_item("mean_coord", stats.mean_coord)?;
        out.set_item("se_coord", stats.se_coord)?;
        out.set_item("mean_norm_sq", stats.mean_norm_sq)?;
        out.set_item("se_norm_sq", stats.se_norm_sq)?;
        out.set_item("mean_regime", stats.mean_regime)?;
        out.set_item("time_avg_norm_sq", stats.time_avg_norm_sq_mean)?;
        out.set_item("time_avg_norm_sq_se", stats.time_avg_norm_sq_se)?;
        out.set_item(
            "terminal_regime_counts",
            stats
                .terminal_regime_counts
                .iter()
                .map(|(k, v)| (*k, *v))
                .collect::<BTreeMap<usize, u64>>(),
        )?;
        out.set_item("n_completed", stats.n_completed)?;
        out.set_item("n_exploded", stats.n_exploded)?;
        out.set_item("n_ceiling", stats.n_ceiling)?;
        Ok(out)
    }

    /// Evaluate the extended generator `Af(x, k)` part by part.
    #[pyo3(signature = (function, x, k, params = None, mark_budget = 4096, seed = 0))]
    fn generator<'py>(
        &self,
        py: Python<'py>,
        function: &str,
        x: Vec<f64>,
        k: usize,
        params: Option<BTreeMap<String, f64>>,
        mark_budget: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = function_by_name(function, params)?;
        let mut rng = StreamFactory::new(seed).stream(0, StreamKind::Marks);
        let gv = apply_generator(
            &self.inner,
            &f,
            &x,
            k,
            &GeneratorOptions { mark_budget },
            &mut rng,
        )
        .map_err(core_err)?;
        let out = PyDict::new(py);
        out.set_item("local", gv.local)?;
        out.set_item("jump", gv.jump)?;
        out.set_item("switching", gv.switching)?;
        out.set_item("total", gv.total())?;
        out.set_item("jump_se", gv.jump_se)?;
        Ok(out)
    }

    /// Dynkin residual `E f(X_t,L_t) − f(x0,k0) − E ∫ Af ds`.
    #[pyo3(signature = (function, x0, k0, t, dt, n = 2000, params = None, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn dynkin_residual<'py>(
        &self,
        py: Python<'py>,
        function: &str,
        x0: Vec<f64>,
        k0: usize,
        t: f64,
        dt: f64,
        n: usize,
        params: Option<BTreeMap<String, f64>>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = function_by_name(function, params)?;
        let cfg = sim_config(t, dt, seed, 1e6, 10_000);
        let res = dynkin_residual(
            &self.inner,
            &f,
            &x0,
            k0,
            t,
            &cfg,
            &DynkinOptions {
                n_paths: n,
                mark_budget: 2_048,
            },
        )
        .map_err(core_err)?;
        let out = PyDict::new(py);
        out.set_item("residual", res.residual)?;
        out.set_item("std_error", res.std_error)?;
        out.set_item("excluded", res.excluded)?;
        Ok(out)
    }

    /// Truncated jump-count series for a Gaussian-kernel regime.
    #[pyo3(signature = (k, t, x0, lo, hi, terms = 6, mark_budget = 20_000, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn transition_series<'py>(
        &self,
        py: Python<'py>,
        k: usize,
        t: f64,
        x0: f64,
        lo: f64,
        hi: f64,
        terms: usize,
        mark_budget: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = transition_series(&self.inner, k, t, x0, (lo, hi), terms, mark_budget, seed)
            .map_err(core_err)?;
        let out = PyDict::new(py);
        let rows: Vec<(usize, f64, f64, f64)> = s
            .terms
            .iter()
            .map(|t| (t.jumps, t.weight, t.value, t.se))
            .collect();
        out.set_item("terms", rows)?;
        out.set_item("total", s.total())?;
        out.set_item("total_se", s.total_se())?;
        out.set_item("remainder_bound", s.remainder_bound)?;
        Ok(out)
    }

    /// Synchronous/basic-coupling experiment from states `x0` and `z0`.
    #[pyo3(signature = (x0, z0, k0, checkpoints, n, dt, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn couple<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        z0: Vec<f64>,
        k0: usize,
        checkpoints: Vec<f64>,
        n: usize,
        dt: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let horizon = checkpoints
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let cfg = sim_config(horizon, dt, seed, 1e6, 10_000);
        let rep = contraction_estimate(&self.inner, &x0, &z0, k0, &checkpoints, n, &cfg)
            .map_err(core_err)?;
        let out = PyDict::new(py);
        out.set_item("gap", rep.gap)?;
        out.set_item("checkpoints", rep.checkpoints)?;
        out.set_item("mean_distance", rep.mean_distance)?;
        out.set_item("se_distance", rep.se_distance)?;
        out.set_item("p_decouple", rep.p_decouple)?;
        out.set_item("p_decouple_se", rep.p_decouple_se)?;
        out.set_item("fitted_rate", rep.fitted_rate)?;
        out.set_item("envelope_rate", rep.envelope_rate)?;
        out.set_item("exact_coupling", rep.exact_coupling)?;
        Ok(out)
    }

    /// Importance-sampled `E f(X_T, L_T)` through the auxiliary chain.
    #[pyo3(signature = (function, x0, k0, t, dt, n, params = None, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn change_measure<'py>(
        &self,
        py: Python<'py>,
        function: &str,
        x0: Vec<f64>,
        k0: usize,
        t: f64,
        dt: f64,
        n: usize,
        params: Option<BTreeMap<String, f64>>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = function_by_name(function, params)?;
        let aux = build_qhat(self.inner.kappa(), 64).map_err(core_err)?;
        let cfg = sim_config(t, dt, seed, 1e6, 10_000);
        let est = weighted_expectation(&self.inner, &aux, &f, &x0, k0, t, n, &cfg)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let out = PyDict::new(py);
        out.set_item("value", est.value)?;
        out.set_item("std_error", est.std_error)?;
        out.set_item("weight_mean", est.weight_mean)?;
        out.set_item("weight_se", est.weight_se)?;
        out.set_item("ess", est.ess)?;
        out.set_item("zero_weight_fraction", est.zero_weight_fraction)?;
        out.set_item("degenerate", est.degenerate)?;
        Ok(out)
    }

    /// Foster-Lyapunov drift certificate at sampled points.
    #[pyo3(signature = (function, alpha, gamma, radius, max_regime, params = None, budget = 500, tolerance = 1e-6, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn drift_check<'py>(
        &self,
        py: Python<'py>,
        function: &str,
        alpha: f64,
        gamma: f64,
        radius: f64,
        max_regime: usize,
        params: Option<BTreeMap<String, f64>>,
        budget: usize,
        tolerance: f64,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = function_by_name(function, params)?;
        let sampler = RegionSampler { radius, max_regime };
        let cert = check_drift(
            &self.inner,
            &f,
            &sampler,
            alpha,
            gamma,
            tolerance,
            budget,
            seed,
        )
        .map_err(core_err)?;
        let out = PyDict::new(py);
        out.set_item("passed", cert.passed())?;
        out.set_item("worst_margin", cert.worst_margin())?;
        out.set_item("samples", cert.samples.len())?;
        out.set_item("violations", cert.violations.len())?;
        out.set_item("summary", cert.summary())?;
        Ok(out)
    }
}

/// Unit-rate targets of row `k` of the auxiliary generator for band `kappa`.
#[pyfunction]
fn qhat_row_targets(kappa: usize, k: usize) -> PyResult<Vec<usize>> {
    Ok(build_qhat(kappa, 64).map_err(core_err)?.row_targets(k))
}

/// Registered model families as `(name, description, schema)`.
#[pyfunction]
fn list_models() -> Vec<(String, String, String)> {
    families::list_models()
}

/// Registered test-function names.
#[pyfunction]
fn list_test_functions() -> Vec<&'static str> {
    test_functions::registered_names()
}

#[pymodule]
fn rsjd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(qhat_row_targets, m)?)?;
    m.add_function(wrap_pyfunction!(list_models, m)?)?;
    m.add_function(wrap_pyfunction!(list_test_functions, m)?)?;
    Ok(())
}
