//! Probabilistic assumption probing.
//!
//! The checked bounds quantify over all of `ℝ^d`, so the report speaks of
//! "pass at N probes", never of proof. A bound fails only with a concrete
//! witness attached; bounds whose constants were not supplied come back
//! `Unknown`.

use rand_chacha::ChaCha12Rng;

use super::{norm, norm_sq, ModelSpec};
use crate::rng::{StreamFactory, StreamKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Unknown,
}

/// Witness for a failed (or worst-ratio) probe.
#[derive(Debug, Clone)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub regime: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Worst observed lhs/rhs over the probes (∞ when rhs = 0 < lhs).
    pub worst_ratio: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub checks: Vec<BoundCheck>,
    pub probes_used: usize,
    pub pairs_used: usize,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const MC_BUDGET: usize = 4_096;
const MAX_PAIRS: usize = 2_000;

struct RatioTracker {
    name: &'static str,
    worst: f64,
    witness: Option<Witness>,
}

impl RatioTracker {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            worst: 0.0,
            witness: None,
        }
    }

    fn observe(&mut self, lhs: f64, rhs: f64, x: &[f64], y: Option<&[f64]>, k: usize) {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > self.worst {
            self.worst = ratio;
            self.witness = Some(Witness {
                x: x.to_vec(),
                y: y.map(<[f64]>::to_vec),
                regime: k,
                lhs,
                rhs,
            });
        }
    }

    fn finish(self, tolerance: f64) -> BoundCheck {
        let status = if self.worst <= 1.0 + tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        BoundCheck {
            name: self.name,
            status,
            worst_ratio: self.worst,
            witness: if status == CheckStatus::Fail {
                self.witness
            } else {
                None
            },
        }
    }

    fn unknown(name: &'static str) -> BoundCheck {
        BoundCheck {
            name,
            status: CheckStatus::Unknown,
            worst_ratio: f64::NAN,
            witness: None,
        }
    }
}

/// Check the growth, Lipschitz, rate-bound, rate-Hölder, jump
/// first-moment-Lipschitz and rate total-variation bounds at the supplied
/// probe points. Pair bounds probe all same-regime probe pairs (capped).
pub fn validate_assumptions(
    model: &ModelSpec,
    probes: &[(Vec<f64>, usize)],
    tolerance: f64,
) -> AssumptionReport {
    assert!(!probes.is_empty(), "assumption probing needs probe points");
    let d = model.dim();
    let h = model.growth_bound();
    let h_rate = model.rates().bound().or(h);
    let delta = model.holder_exponent();
    let mut rng: ChaCha12Rng = StreamFactory::new(0x5eed).stream(0, StreamKind::Probe);

    let mut growth = h.map(|_| RatioTracker::new("linear-growth"));
    let mut lipschitz = h.map(|_| RatioTracker::new("lipschitz"));
    let mut rate_bound = h_rate.map(|_| RatioTracker::new("rate-bound"));
    let mut rate_holder = h
        .or(h_rate)
        .and(delta)
        .map(|_| RatioTracker::new("rate-holder"));
    let mut jump_lip = h.map(|_| RatioTracker::new("jump-first-moment-lipschitz"));
    let mut rate_tv = h.or(h_rate).map(|_| RatioTracker::new("rate-tv-lipschitz"));

    let mut buf_v = vec![0.0; d];
    let mut buf_m = vec![0.0; d * d];

    // single-point bounds
    for (x, k) in probes {
        if let (Some(h), Some(tr)) = (h, growth.as_mut()) {
            model.drift_into(x, *k, &mut buf_v);
            let mut lhs = norm_sq(&buf_v);
            model.diffusion_into(x, *k, &mut buf_m);
            lhs += norm_sq(&buf_m);
            let (jump_sq, _) = model.jump().integrate(
                &|u| norm_sq(&model.jump_disp(x, *k, u)),
                MC_BUDGET,
                &mut rng,
            );
            lhs += jump_sq;
            tr.observe(lhs, h * (1.0 + norm_sq(x)), x, None, *k);
        }
        if let (Some(h), Some(tr)) = (h_rate, rate_bound.as_mut()) {
            if let Ok(total) = model.q_total(x, *k) {
                tr.observe(total, h * (*k as f64 + 1.0), x, None, *k);
            }
        }
    }

    // pair bounds, same regime
    let mut pairs = 0usize;
    'outer: for i in 0..probes.len() {
        for j in (i + 1)..probes.len() {
            if probes[i].1 != probes[j].1 {
                continue;
            }
            let (x, k) = (&probes[i].0, probes[i].1);
            let y = &probes[j].0;
            let gap: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let dist = norm(&gap);
            if dist == 0.0 {
                continue;
            }
            pairs += 1;

            if let (Some(h), Some(tr)) = (h, lipschitz.as_mut()) {
                let bx = model.drift_vec(x, k);
                let by = model.drift_vec(y, k);
                let mut lhs = bx.iter().zip(&by).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let sx = model.diffusion_mat(x, k);
                let sy = model.diffusion_mat(y, k);
                lhs += sx.iter().zip(&sy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                let (jump_sq, _) = model.jump().integrate(
                    &|u| {
                        let cx = model.jump_disp(x, k, u);
                        let cy = model.jump_disp(y, k, u);
                        cx.iter().zip(&cy).map(|(a, b)| (a - b) * (a - b)).sum()
                    },
                    MC_BUDGET,
                    &mut rng,
                );
                lhs += jump_sq;
                tr.observe(lhs, h * dist * dist, x, Some(y), k);
            }

            if let (Some(h), Some(tr)) = (h, jump_lip.as_mut()) {
                let (lhs, _) = model.jump().integrate(
                    &|u| {
                        let cx = model.jump_disp(x, k, u);
                        let cy = model.jump_disp(y, k, u);
                        norm(&cx.iter().zip(&cy).map(|(a, b)| a - b).collect::<Vec<_>>())
                    },
                    MC_BUDGET,
                    &mut rng,
                );
                tr.observe(lhs, h * dist, x, Some(y), k);
            }

            let tv = match (model.q_row(x, k), model.q_row(y, k)) {
                (Ok(rx), Ok(ry)) => {
                    let lo = k.saturating_sub(model.kappa());
                    let hi = k + model.kappa();
                    Some(
                        (lo..=hi)
                            .filter(|l| *l != k)
                            .map(|l| (rx.rate_to(l) - ry.rate_to(l)).abs())
                            .sum::<f64>(),
                    )
                }
                _ => None,
            };
            if let Some(tv) = tv {
                if let (Some(h), Some(tr)) = (h.or(h_rate), rate_tv.as_mut()) {
                    tr.observe(tv, h * dist, x, Some(y), k);
                }
                if let (Some(h), Some(dl), Some(tr)) = (h.or(h_rate), delta, rate_holder.as_mut()) {
                    tr.observe(tv, h * dist.powf(dl), x, Some(y), k);
                }
            }

            if pairs >= MAX_PAIRS {
                break 'outer;
            }
        }
    }

    let checks = vec![
        growth
            .map(|t| t.finish(tolerance))
            .unwrap_or_else(|| RatioTracker::unknown("linear-growth")),
        lipschitz
            .map(|t| t.finish(tolerance))
            .unwrap_or_else(|| RatioTracker::unknown("lipschitz")),
        rate_bound
            .map(|t| t.finish(tolerance))
            .unwrap_or_else(|| RatioTracker::unknown("rate-bound")),
        rate_holder
            .map(|t| t.finish(tolerance))
            .unwrap_or_else(|| RatioTracker::unknown("rate-holder")),
        jump_lip
            .map(|t| t.finish(tolerance))
            .unwrap_or_else(|| RatioTracker::unknown("jump-first-moment-lipschitz")),
        rate_tv
            .map(|t| t.finish(tolerance))
            .unwrap_or_else(|| RatioTracker::unknown("rate-tv-lipschitz")),
    ];

    AssumptionReport {
        checks,
        probes_used: probes.len(),
        pairs_used: pairs,
    }
}

/// Deterministic probe cloud: `n` points uniform in the centered box of
/// half-width `radius`, regimes cycling through `0..=max_regime`.
pub fn probe_cloud(dim: usize, radius: f64, max_regime: usize, n: usize) -> Vec<(Vec<f64>, usize)> {
    use rand::Rng;
    let mut rng = StreamFactory::new(0x96_0b_e5).stream(1, StreamKind::Probe);
    (0..n)
        .map(|i| {
            let x = (0..dim)
                .map(|_| radius * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            (x, i % (max_regime + 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpMeasure, MarkLaw, ModelSpec, RateMatrix};

    fn probes() -> Vec<(Vec<f64>, usize)> {
        probe_cloud(1, 5.0, 3, 60)
    }

    #[test]
    fn constant_coefficient_model_passes() {
        let m = ModelSpec::builder(1)
            .drift(|_x, _k, out: &mut [f64]| out[0] = 0.5)
            .diffusion(|_x, _k, out: &mut [f64]| out[0] = 1.0)
            .jump_coeff(|_x, _k, u: &[f64], out: &mut [f64]| out[0] = 0.5 * u[0])
            .jump_measure(JumpMeasure::new(1.0, MarkLaw::TwoSidedExponential { scale: 1.0 }).unwrap())
            .rates(RateMatrix::new(1, |_x, _k, _l| 1.0).with_bound(4.0))
            .growth_bound(10.0)
            .holder_exponent(1.0)
            .build()
            .unwrap();
        let report = validate_assumptions(&m, &probes(), 1e-9);
        assert!(report.all_pass(), "{report:?}");
        for c in &report.checks {
            assert_eq!(c.status, CheckStatus::Pass, "{c:?}");
        }
    }

    #[test]
    fn quadratic_drift_fails_growth_with_large_witness() {
        let m = ModelSpec::builder(1)
            .drift(|x: &[f64], _k, out: &mut [f64]| out[0] = x[0] * x[0])
            .growth_bound(2.0)
            .build()
            .unwrap();
        let mut pts = probes();
        pts.push((vec![50.0], 0));
        let report = validate_assumptions(&m, &pts, 1e-9);
        let growth = report.check("linear-growth").unwrap();
        assert_eq!(growth.status, CheckStatus::Fail);
        let w = growth.witness.as_ref().expect("fail carries a witness");
        assert!(w.x[0].abs() > 5.0, "witness should sit at large |x|: {w:?}");
    }

    #[test]
    fn sign_rate_fails_holder_and_lipschitz() {
        // q_{01}(x) = 1_{x>0} jumps at 0
        let m = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, |x: &[f64], k, l| {
                if k == 0 && l == 1 && x[0] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }))
            .growth_bound(5.0)
            .holder_exponent(0.5)
            .build()
            .unwrap();
        let pts = vec![(vec![-1e-4], 0), (vec![1e-4], 0)];
        let report = validate_assumptions(&m, &pts, 1e-9);
        assert_eq!(report.check("rate-holder").unwrap().status, CheckStatus::Fail);
        assert_eq!(
            report.check("rate-tv-lipschitz").unwrap().status,
            CheckStatus::Fail
        );
        let w = report.check("rate-holder").unwrap().witness.as_ref().unwrap();
        assert!(w.x[0] * w.y.as_ref().unwrap()[0] < 0.0, "witness straddles 0");
    }

    #[test]
    fn missing_h_reports_unknown() {
        let m = ModelSpec::builder(1).build().unwrap();
        let report = validate_assumptions(&m, &probes(), 1e-9);
        assert_eq!(report.check("linear-growth").unwrap().status, CheckStatus::Unknown);
        assert!(report.all_pass());
    }
}
