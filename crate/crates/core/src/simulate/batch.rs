//! Ensemble simulation with order-independent, reproducible aggregation.
//!
//! Paths are embarrassingly parallel: path `i` draws every variate from
//! streams derived from `(seed, i)`, per-path summaries are collected in
//! path order and reduced sequentially, so the result is identical for
//! any worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::engine::simulate_hybrid_with;
use super::{JumpEvent, Recorder, SimConfig, SwitchEvent, Termination};
use crate::error::Result;
use crate::model::ModelSpec;
use crate::numerics::Welford;
use crate::rng::{PathStreams, StreamFactory};

/// What the ensemble tracks beyond the raw run parameters.
#[derive(Debug, Clone)]
pub struct BatchOptions {
    /// Times at which per-path functionals are snapshotted (càdlàg).
    pub checkpoints: Vec<f64>,
    /// Burn-in for the per-path time average of `|X|²`.
    pub burn_in: f64,
}

impl BatchOptions {
    pub fn evenly_spaced(t_end: f64, count: usize) -> Self {
        let checkpoints = (1..=count)
            .map(|i| t_end * i as f64 / count as f64)
            .collect();
        Self {
            checkpoints,
            burn_in: 0.0,
        }
    }

    pub fn with_burn_in(mut self, burn: f64) -> Self {
        self.burn_in = burn;
        self
    }
}

/// Ensemble statistics across independent paths.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub checkpoints: Vec<f64>,
    /// Per checkpoint, per coordinate mean of `X`.
    pub mean_coord: Vec<Vec<f64>>,
    pub se_coord: Vec<Vec<f64>>,
    pub mean_norm_sq: Vec<f64>,
    pub var_norm_sq: Vec<f64>,
    pub se_norm_sq: Vec<f64>,
    pub mean_regime: Vec<f64>,
    pub se_regime: Vec<f64>,
    /// Mean and SE of the running supremum `sup_{t≤T} |X(t)|²`.
    pub sup_norm_sq_mean: f64,
    pub sup_norm_sq_se: f64,
    /// Mean and SE of `sup_{t≤T} Λ(t)²`.
    pub sup_regime_sq_mean: f64,
    pub sup_regime_sq_se: f64,
    /// Mean and SE across paths of the time average of `|X|²` on
    /// `[burn_in, T]`.
    pub time_avg_norm_sq_mean: f64,
    pub time_avg_norm_sq_se: f64,
    pub terminal_regime_counts: BTreeMap<usize, u64>,
    pub n_paths: usize,
    pub n_completed: usize,
    pub n_exploded: usize,
    pub n_ceiling: usize,
}

/// Streaming per-path summary recorder.
struct SummaryRecorder<'a> {
    dim: usize,
    checkpoints: &'a [f64],
    next_cp: usize,
    burn_in: f64,
    prev_t: f64,
    prev_x: Vec<f64>,
    prev_k: usize,
    prev_f: f64,
    started: bool,
    cp_values: Vec<Option<(Vec<f64>, f64, usize)>>,
    sup_norm_sq: f64,
    sup_regime_sq: f64,
    time_avg_acc: f64,
    time_avg_len: f64,
}

impl<'a> SummaryRecorder<'a> {
    fn new(dim: usize, checkpoints: &'a [f64], burn_in: f64) -> Self {
        Self {
            dim,
            checkpoints,
            next_cp: 0,
            burn_in,
            prev_t: 0.0,
            prev_x: vec![0.0; dim],
            prev_k: 0,
            prev_f: 0.0,
            started: false,
            cp_values: vec![None; checkpoints.len()],
            sup_norm_sq: 0.0,
            sup_regime_sq: 0.0,
            time_avg_acc: 0.0,
            time_avg_len: 0.0,
        }
    }

    fn snapshot_prev(&mut self, idx: usize) {
        self.cp_values[idx] = Some((self.prev_x.clone(), self.prev_f, self.prev_k));
    }

    fn time_avg(&self) -> f64 {
        if self.time_avg_len > 0.0 {
            self.time_avg_acc / self.time_avg_len
        } else {
            f64::NAN
        }
    }
}

impl Recorder for SummaryRecorder<'_> {
    fn node(&mut self, t: f64, x: &[f64], k: usize) {
        let f: f64 = x.iter().map(|v| v * v).sum();
        if self.started {
            // checkpoints strictly before this node take the previous
            // (càdlàg) value; a checkpoint equal to t takes this node.
            while self.next_cp < self.checkpoints.len() && self.checkpoints[self.next_cp] < t {
                let i = self.next_cp;
                self.snapshot_prev(i);
                self.next_cp += 1;
            }
            // time average of |X|² with burn-in clipping
            let lo = self.prev_t.max(self.burn_in);
            if t > lo {
                let w = t - lo;
                self.time_avg_acc += 0.5 * (self.prev_f + f) * w;
                self.time_avg_len += w;
            }
        }
        while self.next_cp < self.checkpoints.len() && self.checkpoints[self.next_cp] <= t {
            let i = self.next_cp;
            self.cp_values[i] = Some((x.to_vec(), f, k));
            self.next_cp += 1;
        }
        self.sup_norm_sq = self.sup_norm_sq.max(f);
        self.sup_regime_sq = self.sup_regime_sq.max((k * k) as f64);
        self.prev_t = t;
        self.prev_x.clear();
        self.prev_x.extend_from_slice(x);
        self.prev_k = k;
        self.prev_f = f;
        self.started = true;
        debug_assert_eq!(x.len(), self.dim);
    }

    fn switch(&mut self, _ev: &SwitchEvent) {}

    fn jump(&mut self, _ev: &JumpEvent) {}

    fn relabel_last_regime(&mut self, k: usize) {
        self.prev_k = k;
        self.sup_regime_sq = self.sup_regime_sq.max((k * k) as f64);
        // a checkpoint exactly at the switch epoch sees the post value
        if self.next_cp > 0 {
            if let Some(cp) = self.cp_values[self.next_cp - 1].as_mut() {
                if self.checkpoints[self.next_cp - 1] == self.prev_t {
                    cp.2 = k;
                }
            }
        }
    }
}

struct PathSummary {
    cp_values: Vec<Option<(Vec<f64>, f64, usize)>>,
    sup_norm_sq: f64,
    sup_regime_sq: f64,
    time_avg_norm_sq: f64,
    status: Termination,
    terminal_regime: usize,
}

const CHUNK: usize = 256;

/// Run `cfg.n_paths` independent paths and aggregate.
pub fn simulate_batch(
    model: &ModelSpec,
    x0: &[f64],
    k0: usize,
    cfg: &SimConfig,
    opts: &BatchOptions,
) -> Result<EnsembleStats> {
    cfg.validate(x0, k0)?;
    if cfg.n_paths < 2 {
        return Err(crate::error::Error::InvalidConfig(
            "run.paths: ensembles need at least 2 paths".into(),
        ));
    }
    let mut checkpoints = opts.checkpoints.clone();
    checkpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let factory = StreamFactory::new(cfg.seed);
    let d = model.dim();

    let n_cp = checkpoints.len();
    let mut coord_acc: Vec<Vec<Welford>> = vec![vec![Welford::default(); d]; n_cp];
    let mut norm_acc: Vec<Welford> = vec![Welford::default(); n_cp];
    let mut regime_acc: Vec<Welford> = vec![Welford::default(); n_cp];
    let mut sup_norm = Welford::default();
    let mut sup_regime = Welford::default();
    let mut time_avg = Welford::default();
    let mut terminal_counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut n_completed = 0usize;
    let mut n_exploded = 0usize;
    let mut n_ceiling = 0usize;

    let indices: Vec<u64> = (0..cfg.n_paths as u64).collect();
    for chunk in indices.chunks(CHUNK) {
        let summaries: Vec<Result<PathSummary>> = chunk
            .par_iter()
            .map(|&idx| {
                let mut streams = PathStreams::for_path(&factory, idx);
                let mut rec = SummaryRecorder::new(d, &checkpoints, opts.burn_in);
                let (status, _x, k, _t) =
                    simulate_hybrid_with(model, &mut rec, x0, k0, cfg, &mut streams)?;
                Ok(PathSummary {
                    cp_values: std::mem::take(&mut rec.cp_values),
                    sup_norm_sq: rec.sup_norm_sq,
                    sup_regime_sq: rec.sup_regime_sq,
                    time_avg_norm_sq: rec.time_avg(),
                    status,
                    terminal_regime: k,
                })
            })
            .collect();
        for summary in summaries {
            let s = summary?;
            match s.status {
                Termination::Completed => n_completed += 1,
                Termination::Exploded { .. } => n_exploded += 1,
                Termination::CeilingHit { .. } => n_ceiling += 1,
            }
            if s.status != Termination::Completed {
                continue;
            }
            *terminal_counts.entry(s.terminal_regime).or_insert(0) += 1;
            for (i, cp) in s.cp_values.iter().enumerate() {
                if let Some((x, f, k)) = cp {
                    for (j, v) in x.iter().enumerate() {
                        coord_acc[i][j].push(*v);
                    }
                    norm_acc[i].push(*f);
                    regime_acc[i].push(*k as f64);
                }
            }
            sup_norm.push(s.sup_norm_sq);
            sup_regime.push(s.sup_regime_sq);
            if s.time_avg_norm_sq.is_finite() {
                time_avg.push(s.time_avg_norm_sq);
            }
        }
    }

    Ok(EnsembleStats {
        checkpoints,
        mean_coord: coord_acc
            .iter()
            .map(|row| row.iter().map(Welford::mean).collect())
            .collect(),
        se_coord: coord_acc
            .iter()
            .map(|row| row.iter().map(Welford::std_error).collect())
            .collect(),
        mean_norm_sq: norm_acc.iter().map(Welford::mean).collect(),
        var_norm_sq: norm_acc.iter().map(Welford::variance).collect(),
        se_norm_sq: norm_acc.iter().map(Welford::std_error).collect(),
        mean_regime: regime_acc.iter().map(Welford::mean).collect(),
        se_regime: regime_acc.iter().map(Welford::std_error).collect(),
        sup_norm_sq_mean: sup_norm.mean(),
        sup_norm_sq_se: sup_norm.std_error(),
        sup_regime_sq_mean: sup_regime.mean(),
        sup_regime_sq_se: sup_regime.std_error(),
        time_avg_norm_sq_mean: time_avg.mean(),
        time_avg_norm_sq_se: time_avg.std_error(),
        terminal_regime_counts: terminal_counts,
        n_paths: cfg.n_paths,
        n_completed,
        n_exploded,
        n_ceiling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::families;
    use crate::model::{ModelSpec, RateMatrix};

    #[test]
    fn determinism_across_worker_counts() {
        let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
        let cfg = SimConfig::new(1.0, 0.01).with_seed(77).with_paths(300);
        let opts = BatchOptions::evenly_spaced(1.0, 5);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| simulate_batch(&model, &[0.4], 0, &cfg, &opts).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean_norm_sq, b.mean_norm_sq);
        assert_eq!(a.mean_coord, b.mean_coord);
        assert_eq!(a.sup_norm_sq_mean, b.sup_norm_sq_mean);
    }

    #[test]
    fn identical_seeds_identical_paths() {
        let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
        let cfg = SimConfig::new(0.5, 0.01).with_seed(3);
        let p1 = super::super::simulate_hybrid(&model, &[0.0], 0, &cfg, 9).unwrap();
        let p2 = super::super::simulate_hybrid(&model, &[0.0], 0, &cfg, 9).unwrap();
        assert_eq!(p1.times, p2.times);
        assert_eq!(p1.terminal().0, p2.terminal().0);
    }

    #[test]
    fn zero_noise_has_zero_variance() {
        let model = ModelSpec::builder(1)
            .drift(|x: &[f64], _k, out: &mut [f64]| out[0] = -x[0])
            .build()
            .unwrap();
        let cfg = SimConfig::new(1.0, 0.01).with_paths(16);
        let opts = BatchOptions::evenly_spaced(1.0, 4);
        let stats = simulate_batch(&model, &[1.0], 0, &cfg, &opts).unwrap();
        for v in &stats.var_norm_sq {
            assert!(*v < 1e-28, "{v}");
        }
    }

    #[test]
    fn two_state_occupancy_matches_matrix_exponential() {
        // q01 = q10 = 1: P(Λ_1 = 0 | Λ_0 = 0) = (1 + e^{−2})/2 ≈ 0.5677
        let model = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, |_x, k, l| {
                if (k == 0 && l == 1) || (k == 1 && l == 0) {
                    1.0
                } else {
                    0.0
                }
            }))
            .build()
            .unwrap();
        let n = 40_000;
        let cfg = SimConfig::new(1.0, 0.05).with_seed(123).with_paths(n);
        let opts = BatchOptions {
            checkpoints: vec![1.0],
            burn_in: 0.0,
        };
        let stats = simulate_batch(&model, &[0.0], 0, &cfg, &opts).unwrap();
        let occupancy0 =
            *stats.terminal_regime_counts.get(&0).unwrap_or(&0) as f64 / stats.n_completed as f64;
        let exact = 0.5 * (1.0 + (-2.0f64).exp());
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(
            (occupancy0 - exact).abs() < 3.0 * se,
            "{occupancy0} vs {exact} ± {}",
            3.0 * se
        );
    }
}
