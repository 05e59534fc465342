//! Empirical convergence to the invariant law.
//!
//! The f-norm of the ergodicity definition is not directly estimable, so
//! the distance proxy is binned total variation over a fixed box
//! partition of `(x, k)`; the reference law comes from one long run with
//! burn-in discarded. Reported rates are empirical — the underlying
//! theorem is existential about its constants.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::linear_fit;
use crate::rng::{PathStreams, StreamFactory};
use crate::simulate::{
    simulate_hybrid_with, JumpEvent, Recorder, SimConfig, SwitchEvent, Termination,
};

#[derive(Debug, Clone)]
pub struct ConvergenceOptions {
    /// Cells per continuous dimension.
    pub bins: usize,
    /// Histogram box half-width; mass outside clamps to edge cells.
    pub box_halfwidth: f64,
    /// Regime cells `0..=max_regime_bin` (larger regimes clamp).
    pub max_regime_bin: usize,
    /// Length of the reference long run.
    pub reference_t: f64,
    pub reference_burn: f64,
    /// Sampling period along the reference run.
    pub reference_thin: f64,
    /// Number of leading checkpoints used in the decay fit (later
    /// checkpoints sit at the sampling noise floor); `None` fits all.
    pub fit_prefix: Option<usize>,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            bins: 40,
            box_halfwidth: 4.0,
            max_regime_bin: 8,
            reference_t: 2_000.0,
            reference_burn: 20.0,
            reference_thin: 0.25,
            fit_prefix: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ErgodicityReport {
    pub checkpoints: Vec<f64>,
    /// Binned-TV distance to the reference, per initial condition and
    /// checkpoint.
    pub distances: Vec<Vec<f64>>,
    /// Log-linear decay fit of the first initial condition's curve.
    pub fitted_rate: f64,
    pub fit_r2: f64,
    /// Distance between the ensembles of initial condition `i ≥ 1` and
    /// initial condition 0 at the final checkpoint.
    pub cross_distances_final: Vec<f64>,
    /// Reference-histogram cells with suspiciously few hits.
    pub undersampled_bins: usize,
    pub n_paths: usize,
}

struct Histogram {
    dims: usize,
    bins: usize,
    half: f64,
    regimes: usize,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    fn new(dims: usize, opts: &ConvergenceOptions) -> Self {
        let cells = opts.bins.pow(dims as u32) * (opts.max_regime_bin + 1);
        Self {
            dims,
            bins: opts.bins,
            half: opts.box_halfwidth,
            regimes: opts.max_regime_bin + 1,
            counts: vec![0; cells],
            total: 0,
        }
    }

    fn cell(&self, x: &[f64], k: usize) -> usize {
        let mut idx = 0usize;
        for i in 0..self.dims {
            let w = 2.0 * self.half / self.bins as f64;
            let j = (((x[i] + self.half) / w).floor().max(0.0) as usize).min(self.bins - 1);
            idx = idx * self.bins + j;
        }
        idx * self.regimes + k.min(self.regimes - 1)
    }

    fn push(&mut self, x: &[f64], k: usize) {
        let c = self.cell(x, k);
        self.counts[c] += 1;
        self.total += 1;
    }

    fn tv(&self, other: &Histogram) -> f64 {
        let (n, m) = (self.total.max(1) as f64, other.total.max(1) as f64);
        0.5 * self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(&a, &b)| (a as f64 / n - b as f64 / m).abs())
            .sum::<f64>()
    }
}

/// Recorder snapshotting `(x, k)` at the requested times (càdlàg).
struct SnapshotRecorder<'a> {
    checkpoints: &'a [f64],
    next: usize,
    prev: Option<(Vec<f64>, usize)>,
    prev_t: f64,
    out: Vec<Option<(Vec<f64>, usize)>>,
}

impl<'a> SnapshotRecorder<'a> {
    fn new(checkpoints: &'a [f64]) -> Self {
        Self {
            checkpoints,
            next: 0,
            prev: None,
            prev_t: 0.0,
            out: vec![None; checkpoints.len()],
        }
    }
}

impl Recorder for SnapshotRecorder<'_> {
    fn node(&mut self, t: f64, x: &[f64], k: usize) {
        if self.prev.is_some() {
            while self.next < self.checkpoints.len() && self.checkpoints[self.next] < t {
                self.out[self.next] = self.prev.clone();
                self.next += 1;
            }
        }
        while self.next < self.checkpoints.len() && self.checkpoints[self.next] <= t {
            self.out[self.next] = Some((x.to_vec(), k));
            self.next += 1;
        }
        self.prev = Some((x.to_vec(), k));
        self.prev_t = t;
    }

    fn switch(&mut self, _ev: &SwitchEvent) {}

    fn jump(&mut self, _ev: &JumpEvent) {}

    fn relabel_last_regime(&mut self, k: usize) {
        if let Some(p) = self.prev.as_mut() {
            p.1 = k;
        }
        if self.next > 0 && self.checkpoints[self.next - 1] == self.prev_t {
            if let Some(cp) = self.out[self.next - 1].as_mut() {
                cp.1 = k;
            }
        }
    }
}

/// Measure binned-TV convergence of ensemble laws toward a long-run
/// reference for one or more initial conditions.
pub fn empirical_convergence(
    model: &ModelSpec,
    inits: &[(Vec<f64>, usize)],
    checkpoints: &[f64],
    n: usize,
    opts: &ConvergenceOptions,
    cfg: &SimConfig,
) -> Result<ErgodicityReport> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidConfig("ergodicity: need at least one checkpoint".into()));
    }
    if inits.is_empty() {
        return Err(Error::InvalidConfig("ergodicity: need an initial condition".into()));
    }
    let mut cps = checkpoints.to_vec();
    cps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let horizon = *cps.last().unwrap();
    let d = model.dim();

    // reference long run, burn-in discarded, thinned samples
    let mut reference = Histogram::new(d, opts);
    {
        let mut ref_cfg = cfg.clone();
        ref_cfg.t_end = opts.reference_t;
        ref_cfg.validate(&inits[0].0, inits[0].1)?;
        let sample_times: Vec<f64> = {
            let mut ts = Vec::new();
            let mut t = opts.reference_burn;
            while t <= opts.reference_t {
                ts.push(t);
                t += opts.reference_thin;
            }
            ts
        };
        let factory = StreamFactory::new(cfg.seed ^ 0x5afe_5eed);
        let mut streams = PathStreams::for_path(&factory, 0);
        let mut rec = SnapshotRecorder::new(&sample_times);
        let (status, ..) =
            simulate_hybrid_with(model, &mut rec, &inits[0].0, inits[0].1, &ref_cfg, &mut streams)?;
        if status != Termination::Completed {
            return Err(Error::Degenerate(format!(
                "reference long run terminated early ({})",
                status.tag()
            )));
        }
        for snap in rec.out.into_iter().flatten() {
            reference.push(&snap.0, snap.1);
        }
    }
    let undersampled_bins = reference
        .counts
        .iter()
        .filter(|&&c| c > 0 && c < 5)
        .count();

    // ensembles per initial condition
    let mut run_cfg = cfg.clone();
    run_cfg.t_end = horizon;
    let mut distances = Vec::with_capacity(inits.len());
    let mut final_hists: Vec<Histogram> = Vec::with_capacity(inits.len());
    for (which, (x0, k0)) in inits.iter().enumerate() {
        run_cfg.validate(x0, *k0)?;
        let factory = StreamFactory::new(cfg.seed.wrapping_add(which as u64 + 1));
        let mut hists: Vec<Histogram> = (0..cps.len()).map(|_| Histogram::new(d, opts)).collect();
        let indices: Vec<u64> = (0..n as u64).collect();
        for chunk in indices.chunks(512) {
            let snaps: Vec<Result<Vec<Option<(Vec<f64>, usize)>>>> = chunk
                .par_iter()
                .map(|&idx| {
                    let mut streams = PathStreams::for_path(&factory, idx);
                    let mut rec = SnapshotRecorder::new(&cps);
                    let (status, ..) =
                        simulate_hybrid_with(model, &mut rec, x0, *k0, &run_cfg, &mut streams)?;
                    if status == Termination::Completed {
                        Ok(rec.out)
                    } else {
                        Ok(vec![None; cps.len()])
                    }
                })
                .collect();
            for snap in snaps {
                for (h, s) in hists.iter_mut().zip(snap?) {
                    if let Some((x, k)) = s {
                        h.push(&x, k);
                    }
                }
            }
        }
        distances.push(hists.iter().map(|h| h.tv(&reference)).collect::<Vec<_>>());
        final_hists.push(hists.pop().expect("at least one checkpoint"));
    }

    let prefix = opts.fit_prefix.unwrap_or(cps.len()).clamp(2, cps.len());
    let logs: Vec<f64> = distances[0][..prefix]
        .iter()
        .map(|&v| v.max(1e-8).ln())
        .collect();
    let (fitted_rate, fit_r2) = if prefix >= 2 {
        let (slope, _b, r2) = linear_fit(&cps[..prefix], &logs);
        (slope, r2)
    } else {
        (0.0, 1.0)
    };
    let cross = final_hists[1..]
        .iter()
        .map(|h| h.tv(&final_hists[0]))
        .collect();
    Ok(ErgodicityReport {
        checkpoints: cps,
        distances,
        fitted_rate,
        fit_r2,
        cross_distances_final: cross,
        undersampled_bins,
        n_paths: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_checkpoints() {
        let model = crate::model::families::coupled_ou_instance(1.0, 1.0);
        let cfg = SimConfig::new(1.0, 0.01);
        let err = empirical_convergence(
            &model,
            &[(vec![0.0], 0)],
            &[],
            10,
            &ConvergenceOptions::default(),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn histogram_tv_is_zero_on_itself() {
        let opts = ConvergenceOptions::default();
        let mut h = Histogram::new(1, &opts);
        h.push(&[0.3], 1);
        h.push(&[-2.0], 0);
        assert_eq!(h.tv(&h), 0.0);
    }

    #[test]
    fn same_seed_reproduces_report() {
        let model = crate::model::families::coupled_ou_instance(1.0, 2.0);
        let cfg = SimConfig::new(1.0, 0.02).with_seed(9);
        let opts = ConvergenceOptions {
            reference_t: 50.0,
            reference_burn: 2.0,
            reference_thin: 0.5,
            ..Default::default()
        };
        let run = || {
            empirical_convergence(
                &model,
                &[(vec![1.0], 0)],
                &[0.5, 1.0],
                200,
                &opts,
                &cfg,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.distances, b.distances);
        assert_eq!(a.fitted_rate, b.fitted_rate);
    }
}
