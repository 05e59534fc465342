//! Sample-path construction by the interlacing procedure.
//!
//! Between switching epochs the regime is frozen and `X` follows the
//! regime-`k` jump diffusion, integrated by Euler–Maruyama on a `dt`
//! lattice with jump epochs of the homogeneous `Π(U)`-rate Poisson stream
//! (and the switching epoch itself) inserted as extra grid points. The
//! switching epoch of a segment is the first time the integrated clock
//! `∫ q_k(X(s)) ds` exceeds an independent standard exponential variate;
//! the switch target is drawn from the rate row at the pre-switch state.

mod batch;
mod engine;

pub use batch::{simulate_batch, BatchOptions, EnsembleStats};
pub use engine::{
    run_frozen_segment, sample_switch_target, simulate_hybrid, simulate_hybrid_with,
    simulate_regime_segment, SegmentEnd,
};

use crate::error::{Error, Result};

/// How switching epochs are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockScheme {
    /// Trapezoid accumulation of `∫ q_k(X) ds` on the grid with
    /// within-step linear inversion of the clock.
    GridIntegrated,
    /// Exact-in-law thinning against the majorant `H·(k+1)`; requires the
    /// rate bound to be declared on the model.
    Thinning,
}

/// Run parameters of a single simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub n_paths: usize,
    /// Explosion guard: a path is terminated once `|X| > guard_radius`.
    pub guard_radius: f64,
    /// Hard ceiling on the materialized regime band.
    pub regime_ceiling: usize,
    pub clock: ClockScheme,
    /// Small-jump truncation level of an originally σ-finite measure
    /// (documentation of the approximation; the supplied measure must
    /// already be the finite truncation).
    pub truncation: Option<f64>,
}

impl SimConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            dt,
            seed: 0,
            n_paths: 1,
            guard_radius: 1e6,
            regime_ceiling: 10_000,
            clock: ClockScheme::GridIntegrated,
            truncation: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_guard(mut self, r: f64) -> Self {
        self.guard_radius = r;
        self
    }

    pub fn with_ceiling(mut self, c: usize) -> Self {
        self.regime_ceiling = c;
        self
    }

    pub fn with_clock(mut self, c: ClockScheme) -> Self {
        self.clock = c;
        self
    }

    pub fn validate(&self, x0: &[f64], k0: usize) -> Result<()> {
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidConfig("run.t: must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt < self.t_end) {
            return Err(Error::InvalidConfig("run.dt: must satisfy 0 < dt < t".into()));
        }
        let r0 = crate::model::norm(x0);
        if self.guard_radius <= r0 {
            return Err(Error::InvalidConfig(format!(
                "run.guard_radius: must exceed |x0| = {r0}"
            )));
        }
        if self.regime_ceiling <= k0 {
            return Err(Error::InvalidConfig(
                "run.regime_ceiling: must exceed the initial regime".into(),
            ));
        }
        Ok(())
    }
}

/// Why a path stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    Exploded { at: f64 },
    CeilingHit { at: f64 },
}

impl Termination {
    pub fn tag(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Exploded { .. } => "exploded",
            Termination::CeilingHit { .. } => "ceiling",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwitchEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
    pub displacement: Vec<f64>,
}

/// Streaming observer of a simulated path; lets ensembles aggregate
/// without materializing every trajectory.
pub trait Recorder {
    fn node(&mut self, t: f64, x: &[f64], k: usize);
    fn switch(&mut self, _ev: &SwitchEvent) {}
    fn jump(&mut self, _ev: &JumpEvent) {}
    /// Rewrite the regime of the most recent node (the post-switch value
    /// at a switching epoch, keeping Λ right-continuous).
    fn relabel_last_regime(&mut self, k: usize);
}

/// One recorded trajectory of `(X, Λ)`.
#[derive(Debug, Clone)]
pub struct HybridPath {
    dim: usize,
    pub times: Vec<f64>,
    states: Vec<f64>,
    pub regimes: Vec<usize>,
    pub switches: Vec<SwitchEvent>,
    pub jumps: Vec<JumpEvent>,
    pub status: Termination,
}

impl HybridPath {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            states: Vec::new(),
            regimes: Vec::new(),
            switches: Vec::new(),
            jumps: Vec::new(),
            status: Termination::Completed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self) -> (&[f64], usize) {
        let n = self.len() - 1;
        (self.state(n), self.regimes[n])
    }

    pub fn terminal_time(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    /// Right-continuous evaluation: the value at the last node with
    /// `times[i] ≤ t`.
    pub fn eval(&self, t: f64) -> (&[f64], usize) {
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        (self.state(i), self.regimes[i])
    }

    /// Inter-switch holding times `θ_n`, including the final censored
    /// stretch only if `include_censored`.
    pub fn holding_times(&self, include_censored: bool) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.switches.len() + 1);
        let mut prev = self.times.first().copied().unwrap_or(0.0);
        for sw in &self.switches {
            out.push(sw.time - prev);
            prev = sw.time;
        }
        if include_censored && !self.times.is_empty() {
            out.push(self.terminal_time() - prev);
        }
        out
    }
}

impl Recorder for HybridPath {
    fn node(&mut self, t: f64, x: &[f64], k: usize) {
        debug_assert_eq!(x.len(), self.dim);
        self.times.push(t);
        self.states.extend_from_slice(x);
        self.regimes.push(k);
    }

    fn switch(&mut self, ev: &SwitchEvent) {
        self.switches.push(ev.clone());
    }

    fn jump(&mut self, ev: &JumpEvent) {
        self.jumps.push(ev.clone());
    }

    fn relabel_last_regime(&mut self, k: usize) {
        if let Some(last) = self.regimes.last_mut() {
            *last = k;
        }
    }
}
