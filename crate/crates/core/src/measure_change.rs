//! Change of measure against a constant-rate auxiliary chain.
//!
//! The auxiliary process `(V, ψ)` keeps the jump-diffusion dynamics of
//! the model but replaces the state-dependent switching by a
//! time-homogeneous chain `ψ` with the banded generator `Q̂`: every
//! diagonal entry is `−2κ` and each row has exactly `2κ` unit entries as
//! symmetric and adjacent to the diagonal as the state boundary at zero
//! permits. The law of `(X, Λ)` on path space up to `T` is absolutely
//! continuous with respect to the law of `(V, ψ)`, with density
//!
//! `M_T = Π_i q_{ψ(υ_i) ψ(υ_{i+1})}(V(υ_{i+1})) ·
//!        exp(−Σ_i ∫_{υ_i}^{υ_{i+1}∧T} [q_{ψ(υ_i)}(V(s)) − 2κ] ds)`,
//!
//! where `υ_m` are the switching epochs of `ψ` and the product runs over
//! the switches up to `T`. Expectations of `(X, Λ)` functionals follow by
//! importance sampling: `E f(X_T, Λ_T) = E[f(V_T, ψ_T)·M_T]`.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::TestFunction;
use crate::model::ModelSpec;
use crate::numerics::Welford;
use crate::rng::{PathStreams, StreamFactory, StreamKind};
use crate::simulate::{
    HybridPath, Recorder, SimConfig, SwitchEvent, Termination,
};

/// The constant banded generator `Q̂` of the auxiliary chain.
#[derive(Debug, Clone, Copy)]
pub struct AuxiliaryChainSpec {
    kappa: usize,
    /// Materialization band for dense row display.
    band: usize,
}

/// Build `Q̂` from the band half-width `κ ≥ 1`.
pub fn build_qhat(kappa: usize, band: usize) -> Result<AuxiliaryChainSpec> {
    if kappa == 0 {
        return Err(Error::InvalidConfig("change-measure: kappa must be ≥ 1".into()));
    }
    Ok(AuxiliaryChainSpec { kappa, band })
}

impl AuxiliaryChainSpec {
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Total exit rate of every state: `2κ`.
    pub fn exit_rate(&self) -> f64 {
        2.0 * self.kappa as f64
    }

    /// The `2κ` unit-rate targets from state `k`: `{0, …, 2κ} \ {k}` for
    /// boundary rows `k < κ`, and `{k−κ, …, k+κ} \ {k}` from `k ≥ κ`.
    pub fn row_targets(&self, k: usize) -> Vec<usize> {
        let kappa = self.kappa;
        if k < kappa {
            (0..=2 * kappa).filter(|&l| l != k).collect()
        } else {
            (k - kappa..=k + kappa).filter(|&l| l != k).collect()
        }
    }

    /// Dense upper-left `size × size` block of `Q̂` (rows may reach
    /// columns beyond `size`; those entries are dropped from the block).
    pub fn dense_block(&self, size: usize) -> Vec<Vec<f64>> {
        (0..size)
            .map(|k| {
                let mut row = vec![0.0; size];
                row[k] = -self.exit_rate();
                for l in self.row_targets(k) {
                    if l < size {
                        row[l] = 1.0;
                    }
                }
                row
            })
            .collect()
    }
}

/// An auxiliary trajectory `(V, ψ)`; switching epochs of `ψ` are the
/// recorded switch events.
#[derive(Debug, Clone)]
pub struct WeightedPath {
    pub path: HybridPath,
}

impl WeightedPath {
    pub fn switch_count(&self) -> usize {
        self.path.switches.len()
    }
}

/// Simulate `(V, ψ)` from `(x0, k0)`: `ψ` is a constant-rate chain
/// (holding times `Exp(2κ)`, uniform target among the `2κ` unit entries)
/// driven by its own stream, independent of the Brownian/Poisson drivers
/// of `V`; `V` integrates the regime-frozen SDE along `ψ`.
pub fn simulate_auxiliary(
    model: &ModelSpec,
    aux: &AuxiliaryChainSpec,
    x0: &[f64],
    k0: usize,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<WeightedPath> {
    simulate_auxiliary_salted(model, aux, x0, k0, cfg, path_index, 0)
}

/// As [`simulate_auxiliary`], but re-seeding only the chain's stream:
/// with a nonzero `chain_salt` the drivers of `V` are untouched while
/// `ψ` draws from an independent stream (the independence contract of
/// the construction is testable this way).
pub fn simulate_auxiliary_salted(
    model: &ModelSpec,
    aux: &AuxiliaryChainSpec,
    x0: &[f64],
    k0: usize,
    cfg: &SimConfig,
    path_index: u64,
    chain_salt: u64,
) -> Result<WeightedPath> {
    if model.kappa() != aux.kappa {
        return Err(Error::Unsupported(format!(
            "model band κ = {} does not match the auxiliary chain κ = {}; refusing",
            model.kappa(),
            aux.kappa
        )));
    }
    cfg.validate(x0, k0)?;
    let factory = StreamFactory::new(cfg.seed);
    let mut streams = PathStreams::for_path(&factory, path_index);
    let chain_factory = if chain_salt == 0 {
        factory
    } else {
        factory.salted(chain_salt)
    };
    let mut rng_chain: ChaCha12Rng = chain_factory.stream(path_index, StreamKind::AuxChain);

    // pre-draw the chain's epochs and targets on [0, T]
    let exit = aux.exit_rate();
    let mut epochs: Vec<(f64, usize)> = Vec::new();
    let mut t = 0.0;
    let mut k = k0;
    loop {
        let hold = -rng_chain.random::<f64>().max(f64::MIN_POSITIVE).ln() / exit;
        t += hold;
        if t >= cfg.t_end {
            break;
        }
        let targets = aux.row_targets(k);
        let pick = (rng_chain.random::<f64>() * targets.len() as f64) as usize;
        k = targets[pick.min(targets.len() - 1)];
        epochs.push((t, k));
        if k >= cfg.regime_ceiling {
            break;
        }
    }

    // integrate V segment by segment between the chain's epochs
    let mut path = HybridPath::new(model.dim());
    let mut x = x0.to_vec();
    let mut k = k0;
    let mut t0 = 0.0;
    path.node(0.0, &x, k);
    let mut status = Termination::Completed;
    for (upsilon, target) in epochs {
        match crate::simulate::run_frozen_segment(
            model, &mut path, &mut x, k, t0, upsilon, cfg, &mut streams,
        )? {
            Some(at) => {
                status = Termination::Exploded { at };
                break;
            }
            None => {}
        }
        path.switch(&SwitchEvent {
            time: upsilon,
            from: k,
            to: target,
        });
        path.relabel_last_regime(target);
        k = target;
        t0 = upsilon;
        if k >= cfg.regime_ceiling {
            status = Termination::CeilingHit { at: upsilon };
            break;
        }
    }
    if status == Termination::Completed {
        if let Some(at) = crate::simulate::run_frozen_segment(
            model, &mut path, &mut x, k, t0, cfg.t_end, cfg, &mut streams,
        )? {
            status = Termination::Exploded { at };
        }
    }
    path.status = status;
    Ok(WeightedPath { path })
}

/// The Radon–Nikodym weight `M_T` of the model law against the auxiliary
/// law along one recorded `(V, ψ)` path. Accumulated in log space; a zero
/// rate factor short-circuits to an exact zero.
pub fn rn_weight(
    model: &ModelSpec,
    aux: &AuxiliaryChainSpec,
    wp: &WeightedPath,
    t_end: f64,
) -> Result<f64> {
    let path = &wp.path;
    let two_kappa = aux.exit_rate();
    let mut log_m = 0.0;

    // product of switch-rate factors q_{ψ(υ_i) ψ(υ_{i+1})}(V(υ_{i+1}))
    for sw in &path.switches {
        if sw.time > t_end {
            break;
        }
        let (v_at, _) = path.eval(sw.time);
        let rate = model.rates().rate(v_at, sw.from, sw.to);
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::NegativeRate {
                from: sw.from,
                to: sw.to,
                rate,
                x: v_at.to_vec(),
            });
        }
        if rate == 0.0 {
            return Ok(0.0);
        }
        log_m += rate.ln();
    }

    // −Σ ∫ [q_{ψ}(V(s)) − 2κ] ds by trapezoid on the recorded grid;
    // the regime is constant on every inter-node interval
    let mut integral = 0.0;
    for i in 0..path.len() - 1 {
        let t_a = path.times[i];
        let t_b = path.times[i + 1].min(t_end);
        if t_b <= t_a {
            break;
        }
        let k_seg = path.regimes[i];
        let qa = model.q_total(path.state(i), k_seg)?;
        let qb = model.q_total(path.state(i + 1), k_seg)?;
        integral += 0.5 * ((qa - two_kappa) + (qb - two_kappa)) * (t_b - t_a);
    }
    log_m -= integral;
    Ok(log_m.exp())
}

/// Importance-sampling estimate of `E f(X_T, Λ_T)`.
#[derive(Debug, Clone)]
pub struct WeightedEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Mean and SE of the weights themselves (`Ê M_T` should be 1).
    pub weight_mean: f64,
    pub weight_se: f64,
    /// Effective sample size `n / (1 + cv²)` of the weights.
    pub ess: f64,
    pub n_paths: usize,
    pub zero_weight_fraction: f64,
    /// All weights vanished; the estimate is unusable.
    pub degenerate: bool,
    pub excluded: usize,
}

/// Sample mean of `f(V_T, ψ_T)·M_T` over independent weighted paths.
pub fn weighted_expectation(
    model: &ModelSpec,
    aux: &AuxiliaryChainSpec,
    f: &TestFunction,
    x0: &[f64],
    k0: usize,
    t_end: f64,
    n: usize,
    cfg: &SimConfig,
) -> Result<WeightedEstimate> {
    let mut cfg = cfg.clone();
    cfg.t_end = t_end;
    cfg.validate(x0, k0)?;
    let mut val_acc = Welford::default();
    let mut w_acc = Welford::default();
    let mut zeros = 0usize;
    let mut excluded = 0usize;
    let indices: Vec<u64> = (0..n as u64).collect();
    for chunk in indices.chunks(256) {
        let rows: Vec<Result<Option<(f64, f64)>>> = chunk
            .par_iter()
            .map(|&idx| {
                let wp = simulate_auxiliary(model, aux, x0, k0, &cfg, idx)?;
                if wp.path.status != Termination::Completed {
                    return Ok(None);
                }
                let w = rn_weight(model, aux, &wp, t_end)?;
                let (v, psi) = wp.path.terminal();
                Ok(Some((f.eval(v, psi) * w, w)))
            })
            .collect();
        for row in rows {
            match row? {
                Some((fv, w)) => {
                    val_acc.push(fv);
                    w_acc.push(w);
                    if w == 0.0 {
                        zeros += 1;
                    }
                }
                None => excluded += 1,
            }
        }
    }
    if val_acc.count() < 2 {
        return Err(Error::Degenerate("weighted estimate needs ≥ 2 usable paths".into()));
    }
    let wm = w_acc.mean();
    let degenerate = wm == 0.0;
    let cv2 = if wm != 0.0 {
        w_acc.variance() / (wm * wm)
    } else {
        f64::INFINITY
    };
    Ok(WeightedEstimate {
        value: val_acc.mean(),
        std_error: val_acc.std_error(),
        weight_mean: wm,
        weight_se: w_acc.std_error(),
        ess: val_acc.count() as f64 / (1.0 + cv2),
        n_paths: val_acc.count() as usize,
        zero_weight_fraction: zeros as f64 / val_acc.count() as f64,
        degenerate,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{families, ModelSpec, RateMatrix};

    #[test]
    fn qhat_rows_match_displayed_matrix() {
        // κ = 1: row 0 has diagonal −2 and units at {1, 2}; row 2 has
        // units at {1, 3}; every row sums to zero with 2κ unit entries.
        let aux = build_qhat(1, 8).unwrap();
        assert_eq!(aux.row_targets(0), vec![1, 2]);
        assert_eq!(aux.row_targets(2), vec![1, 3]);
        let dense = aux.dense_block(6);
        assert_eq!(dense[0][0], -2.0);
        assert_eq!(dense[0][1], 1.0);
        assert_eq!(dense[0][2], 1.0);
        assert_eq!(dense[0][3], 0.0);
        for (k, row) in dense.iter().enumerate().take(4) {
            let sum: f64 = row.iter().sum();
            assert_eq!(sum, 0.0, "row {k} does not conserve");
            let units = row.iter().filter(|&&v| v == 1.0).count();
            assert_eq!(units, 2, "row {k} unit count");
        }
    }

    #[test]
    fn qhat_row_at_kappa_follows_band_pattern() {
        // κ = 2, row k = 2: targets {0, 1, 3, 4}
        let aux = build_qhat(2, 8).unwrap();
        assert_eq!(aux.row_targets(2), vec![0, 1, 3, 4]);
        // boundary row k = 1 < κ: targets {0, 2, 3, 4}
        assert_eq!(aux.row_targets(1), vec![0, 2, 3, 4]);
        assert_eq!(aux.row_targets(1).len(), 4);
    }

    #[test]
    fn auxiliary_holding_times_are_exp_two_kappa() {
        let model = families::coupled_ou_instance(1.0, 1.0);
        let aux = build_qhat(1, 64).unwrap();
        let cfg = SimConfig::new(30.0, 0.05).with_seed(17).with_ceiling(4000);
        let mut holds = Vec::new();
        for idx in 0..400 {
            let wp = simulate_auxiliary(&model, &aux, &[0.0], 6, &cfg, idx).unwrap();
            holds.extend(wp.path.holding_times(false));
            if holds.len() > 100_000 {
                break;
            }
        }
        let n = holds.len() as f64;
        let mean: f64 = holds.iter().sum::<f64>() / n;
        let se = 0.5 / n.sqrt();
        assert!(
            (mean - 0.5).abs() < 3.0 * se,
            "mean holding {mean} vs 0.5 ± {}",
            3.0 * se
        );
    }

    #[test]
    fn auxiliary_targets_uniform_from_zero() {
        // κ = 1 from state 0: next state uniform on {1, 2}
        let model = families::coupled_ou_instance(1.0, 1.0);
        let aux = build_qhat(1, 64).unwrap();
        let cfg = SimConfig::new(2.0, 0.05).with_seed(29);
        let mut counts = [0u64; 2];
        for idx in 0..4000 {
            let wp = simulate_auxiliary(&model, &aux, &[0.0], 0, &cfg, idx).unwrap();
            if let Some(sw) = wp.path.switches.first() {
                match sw.to {
                    1 => counts[0] += 1,
                    2 => counts[1] += 1,
                    other => panic!("impossible first target {other}"),
                }
            }
        }
        let (_stat, p) = crate::numerics::chi_square_test(&counts, &[0.5, 0.5]);
        assert!(p > 0.01, "uniform target rejected, p = {p}, counts {counts:?}");
    }

    #[test]
    fn weight_is_one_without_switches_at_balanced_rate() {
        // no switches and q_{ψ(0)}(V) ≡ 2κ → M_T = 1
        let model = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, |_x, _k, _l| 1.0))
            .build()
            .unwrap();
        let aux = build_qhat(1, 8).unwrap();
        let mut path = HybridPath::new(1);
        path.node(0.0, &[0.0], 3);
        path.node(0.5, &[0.1], 3);
        path.node(1.0, &[0.2], 3);
        let w = rn_weight(&model, &aux, &WeightedPath { path }, 1.0).unwrap();
        assert!((w - 1.0).abs() < 1e-15, "{w}");
    }

    #[test]
    fn zero_rate_factor_annihilates_weight() {
        // ψ switched 0 → 2 but the model has q_{02} ≡ 0 (nearest neighbor)
        let model = families::coupled_ou_instance(1.0, 1.0);
        let aux = build_qhat(1, 8).unwrap();
        let mut path = HybridPath::new(1);
        path.node(0.0, &[0.0], 0);
        path.node(0.4, &[0.1], 0);
        path.switch(&SwitchEvent {
            time: 0.4,
            from: 0,
            to: 2,
        });
        path.relabel_last_regime(2);
        path.node(1.0, &[0.2], 2);
        let w = rn_weight(&model, &aux, &WeightedPath { path }, 1.0).unwrap();
        assert_eq!(w, 0.0);
    }

    #[test]
    fn constant_rate_weight_closed_form() {
        // no switches, q_k(·) ≡ c: M_T = e^{−(c−2κ)T}
        let c = 3.0;
        let model = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, move |_x, k, l| {
                if l == k + 1 {
                    c
                } else {
                    0.0
                }
            }))
            .build()
            .unwrap();
        let aux = build_qhat(1, 8).unwrap();
        let mut path = HybridPath::new(1);
        path.node(0.0, &[0.0], 0);
        path.node(2.0, &[0.5], 0);
        let w = rn_weight(&model, &aux, &WeightedPath { path }, 2.0).unwrap();
        let exact = (-(c - 2.0) * 2.0f64).exp();
        assert!((w - exact).abs() < 1e-12, "{w} vs {exact}");
    }

    #[test]
    fn q_matching_qhat_gives_unit_weight_pathwise() {
        // unit nearest-neighbor rates match Q̂ (κ = 1) away from state 0:
        // every switch factor is 1 and the exponent integrand q_k − 2κ
        // vanishes, so M_T ≡ 1 along paths that stay off the boundary
        let model = ModelSpec::builder(1)
            .drift(|x: &[f64], k, out: &mut [f64]| out[0] = -(k as f64 + 1.0) * x[0])
            .diffusion(|_x, _k, out: &mut [f64]| out[0] = 0.5)
            .rates(RateMatrix::new(1, |_x, _k, _l| 1.0))
            .build()
            .unwrap();
        let aux = build_qhat(1, 8).unwrap();
        let cfg = SimConfig::new(1.0, 0.01).with_seed(41).with_ceiling(4000);
        let mut interior = 0;
        for idx in 0..200 {
            let wp = simulate_auxiliary(&model, &aux, &[0.2], 50, &cfg, idx).unwrap();
            if wp.path.regimes.iter().all(|&k| k >= 1) {
                let w = rn_weight(&model, &aux, &wp, 1.0).unwrap();
                assert!((w - 1.0).abs() < 1e-12, "path {idx}: M_T = {w}");
                interior += 1;
            }
        }
        assert!(interior > 150, "only {interior} paths stayed interior");
    }

    #[test]
    fn independence_contract_chain_stream_swap() {
        // swapping the ψ stream must leave V's marginal statistics
        // unchanged within Monte Carlo error (coefficients depend on the
        // regime, so the paths themselves do change)
        let model = families::coupled_ou_instance(1.0, 1.0);
        let aux = build_qhat(1, 64).unwrap();
        let cfg = SimConfig::new(1.0, 0.01).with_seed(53);
        let n = 6_000u64;
        let run = |salt: u64| {
            let mut acc = crate::numerics::Welford::default();
            for idx in 0..n {
                let wp =
                    simulate_auxiliary_salted(&model, &aux, &[0.5], 0, &cfg, idx, salt).unwrap();
                if wp.path.status == Termination::Completed {
                    let (v, _) = wp.path.terminal();
                    acc.push(v[0]);
                }
            }
            (acc.mean(), acc.std_error())
        };
        let (m0, se0) = run(0);
        let (m1, se1) = run(99);
        let combined = (se0 * se0 + se1 * se1).sqrt();
        assert!(
            (m0 - m1).abs() <= 3.0 * combined,
            "chain-stream swap moved V's mean: {m0} vs {m1} (3·SE {})",
            3.0 * combined
        );
    }

    #[test]
    fn model_band_mismatch_refused() {
        let model = families::coupled_ou_instance(1.0, 1.0); // κ = 1
        let aux = build_qhat(2, 8).unwrap();
        let cfg = SimConfig::new(1.0, 0.05);
        let err = simulate_auxiliary(&model, &aux, &[0.0], 0, &cfg, 0).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }
}
