//! Replica experiments over the coupled process: contraction of
//! `Ê|X̃(t∧ζ) − Z̃(t∧ζ)|` and the decoupling probability `P̂(ζ ≤ t)`.

use rayon::prelude::*;

use super::engine::simulate_coupled;
use crate::error::{Error, Result};
use crate::model::{norm, ModelSpec};
use crate::numerics::{linear_fit, Welford};
use crate::simulate::SimConfig;

/// Empirical contraction/decoupling summary for one initial gap.
#[derive(Debug, Clone)]
pub struct CouplingReport {
    pub gap: f64,
    pub checkpoints: Vec<f64>,
    /// `Ê|X̃(t∧ζ) − Z̃(t∧ζ)|` per checkpoint.
    pub mean_distance: Vec<f64>,
    pub se_distance: Vec<f64>,
    /// `P̂(ζ ≤ t)` at the final horizon with standard error.
    pub p_decouple: f64,
    pub p_decouple_se: f64,
    /// Fitted exponential rate of the distance curve (`log Ê d(t) ≈
    /// log gap + C·t`) with its regression R².
    pub fitted_rate: f64,
    pub fit_r2: f64,
    /// Smallest rate whose envelope `gap·e^{C·t}` dominates every
    /// checkpoint mean; the bound of interest asserts this exists.
    pub envelope_rate: f64,
    /// All checkpoint distances were exactly zero (exact coupling).
    pub exact_coupling: bool,
    pub replicas: usize,
}

impl CouplingReport {
    /// The realizable form of the contraction bound: a finite rate whose
    /// envelope `gap·e^{C·t}` dominates every checkpoint mean within
    /// 3 standard errors.
    pub fn bound_holds(&self) -> bool {
        self.exact_coupling
            || (self.envelope_rate.is_finite()
                && self
                    .checkpoints
                    .iter()
                    .zip(self.mean_distance.iter().zip(&self.se_distance))
                    .all(|(&t, (&m, &se))| {
                        m <= self.gap * (self.envelope_rate * t).exp() + 3.0 * se
                    }))
    }
}

/// Estimate the pre-decoupling contraction curve from `n` replicas.
pub fn contraction_estimate(
    model: &ModelSpec,
    x: &[f64],
    z: &[f64],
    k: usize,
    checkpoints: &[f64],
    n: usize,
    cfg: &SimConfig,
) -> Result<CouplingReport> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidConfig("couple: need at least one checkpoint".into()));
    }
    let gap = norm(&x.iter().zip(z).map(|(a, b)| a - b).collect::<Vec<_>>());
    let mut cps = checkpoints.to_vec();
    cps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let horizon = *cps.last().unwrap();
    let mut cfg = cfg.clone();
    cfg.t_end = horizon;

    let mut dist_acc = vec![Welford::default(); cps.len()];
    let mut decoupled = 0u64;
    let indices: Vec<u64> = (0..n as u64).collect();
    for chunk in indices.chunks(256) {
        let rows: Vec<Result<(Vec<f64>, bool)>> = chunk
            .par_iter()
            .map(|&r| {
                let p = simulate_coupled(model, x, z, k, &cfg, r)?;
                assert!(
                    p.pre_zeta_regimes_agree(),
                    "regimes diverged before the decoupling time on replica {r}"
                );
                let d: Vec<f64> = cps.iter().map(|&t| p.distance_at_capped(t)).collect();
                Ok((d, p.zeta.is_some_and(|zt| zt <= horizon)))
            })
            .collect();
        for row in rows {
            let (d, dec) = row?;
            for (acc, v) in dist_acc.iter_mut().zip(d) {
                acc.push(v);
            }
            if dec {
                decoupled += 1;
            }
        }
    }

    let mean_distance: Vec<f64> = dist_acc.iter().map(Welford::mean).collect();
    let se_distance: Vec<f64> = dist_acc.iter().map(Welford::std_error).collect();
    let exact_coupling = mean_distance.iter().all(|&m| m == 0.0);
    let envelope_rate = if exact_coupling || gap == 0.0 {
        0.0
    } else {
        cps.iter()
            .zip(&mean_distance)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&t, &m)| (m / gap).ln() / t)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (fitted_rate, fit_r2) = if exact_coupling {
        (0.0, 1.0)
    } else {
        let logs: Vec<f64> = mean_distance.iter().map(|&m| m.max(1e-300).ln()).collect();
        if cps.len() >= 2 {
            let (slope, _intercept, r2) = linear_fit(&cps, &logs);
            (slope, r2)
        } else {
            ((logs[0] - gap.max(1e-300).ln()) / cps[0], 1.0)
        }
    };
    let p = decoupled as f64 / n as f64;
    Ok(CouplingReport {
        gap,
        checkpoints: cps,
        mean_distance,
        se_distance,
        p_decouple: p,
        p_decouple_se: (p * (1.0 - p) / n as f64).sqrt(),
        fitted_rate,
        fit_r2,
        envelope_rate,
        exact_coupling,
        replicas: n,
    })
}

/// Estimate `P(ζ ≤ t)` alone.
pub fn decoupling_probability(
    model: &ModelSpec,
    x: &[f64],
    z: &[f64],
    k: usize,
    t: f64,
    n: usize,
    cfg: &SimConfig,
) -> Result<(f64, f64)> {
    let report = contraction_estimate(model, x, z, k, &[t], n, cfg)?;
    Ok((report.p_decouple, report.p_decouple_se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::families;

    #[test]
    fn identical_starts_report_exact_coupling() {
        let model = families::coupled_ou_instance(1.0, 1.0);
        let cfg = SimConfig::new(1.0, 0.02).with_seed(5);
        let r = contraction_estimate(&model, &[0.4], &[0.4], 0, &[0.5, 1.0], 40, &cfg).unwrap();
        assert!(r.exact_coupling);
        assert_eq!(r.p_decouple, 0.0);
        assert!(r.bound_holds());
    }

    #[test]
    fn ou_contraction_has_negative_rate() {
        // α₀ = −2 contraction: fitted rate < 0
        let model = families::coupled_ou_instance(1.0, 1.0);
        let cfg = SimConfig::new(1.0, 0.01).with_seed(6);
        let r = contraction_estimate(
            &model,
            &[1.0],
            &[0.0],
            0,
            &[0.25, 0.5, 0.75, 1.0],
            200,
            &cfg,
        )
        .unwrap();
        assert!(r.fitted_rate < 0.0, "rate {}", r.fitted_rate);
        assert!(r.envelope_rate < 0.0, "envelope {}", r.envelope_rate);
        assert!(r.bound_holds());
    }

    #[test]
    fn constant_rates_decoupling_probability_zero() {
        let model = families::coupled_ou_instance(1.0, 1.0);
        let cfg = SimConfig::new(1.0, 0.02).with_seed(9);
        let (p, _se) = decoupling_probability(&model, &[1.0], &[-1.0], 0, 1.0, 60, &cfg).unwrap();
        assert_eq!(p, 0.0);
    }
}
