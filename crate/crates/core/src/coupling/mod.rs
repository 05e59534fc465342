//! Coupled simulation of two copies of the process and empirical
//! contraction / decoupling estimates.
//!
//! The two continuous components share one Brownian increment stream and
//! one Poisson mark stream (the synchronous choice implied by the cross
//! term `σ(x,i)σ(z,j)'` of the coupling operator). The regime pair moves
//! by the basic coupling of the rate rows: for each target `l` the joint
//! rate `q_il(x) ∧ q_jl(z)` moves both components to `l`, while the
//! excess rates `[q_il(x) − q_jl(z)]⁺` and `[q_jl(z) − q_il(x)]⁺` move
//! only one. The decoupling time `ζ` is the first time the regimes
//! differ; the quantitative bounds of interest stop at `t ∧ ζ`.

mod engine;
mod report;

pub use engine::{simulate_coupled, CoupledPath};
pub use report::{contraction_estimate, decoupling_probability, CouplingReport};

use crate::error::Result;
use crate::model::ModelSpec;

/// Current joint state `(x̃, k̃, z̃, l̃)`.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub x: Vec<f64>,
    pub k: usize,
    pub z: Vec<f64>,
    pub l: usize,
}

/// The three rate families of the basic coupling at one joint state.
#[derive(Debug, Clone, Default)]
pub struct CoupledRates {
    /// Moves only the first regime component to the target.
    pub excess_first: Vec<(usize, f64)>,
    /// Moves only the second regime component to the target.
    pub excess_second: Vec<(usize, f64)>,
    /// Moves both components to the target.
    pub joint: Vec<(usize, f64)>,
}

impl CoupledRates {
    pub fn total(&self) -> f64 {
        self.excess_first
            .iter()
            .chain(&self.excess_second)
            .chain(&self.joint)
            .map(|(_, r)| r)
            .sum()
    }

    /// Σ_l (excess_first + joint) — must reproduce `q_i(x)`.
    pub fn first_marginal_total(&self) -> f64 {
        self.excess_first
            .iter()
            .chain(&self.joint)
            .map(|(_, r)| r)
            .sum()
    }

    /// Σ_l (excess_second + joint) — must reproduce `q_j(z)`.
    pub fn second_marginal_total(&self) -> f64 {
        self.excess_second
            .iter()
            .chain(&self.joint)
            .map(|(_, r)| r)
            .sum()
    }
}

/// Basic-coupling decomposition of the two rate rows at `(x, i)` and
/// `(z, j)`.
pub fn coupled_switch_rates(
    model: &ModelSpec,
    x: &[f64],
    i: usize,
    z: &[f64],
    j: usize,
) -> Result<CoupledRates> {
    let kappa = model.kappa();
    let row_i = model.q_row(x, i)?;
    let row_j = model.q_row(z, j)?;
    let lo = i.min(j).saturating_sub(kappa);
    let hi = i.max(j) + kappa;
    let mut out = CoupledRates::default();
    for l in lo..=hi {
        let qi = if l == i { 0.0 } else { row_i.rate_to(l) };
        let qj = if l == j { 0.0 } else { row_j.rate_to(l) };
        let joint = qi.min(qj);
        let e1 = qi - joint;
        let e2 = qj - joint;
        if e1 > 0.0 {
            out.excess_first.push((l, e1));
        }
        if e2 > 0.0 {
            out.excess_second.push((l, e2));
        }
        if joint > 0.0 {
            out.joint.push((l, joint));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, RateMatrix};

    #[test]
    fn equal_states_move_together() {
        let model = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, |_x, _k, _l| 1.5))
            .build()
            .unwrap();
        let r = coupled_switch_rates(&model, &[0.3], 2, &[0.3], 2).unwrap();
        assert!(r.excess_first.is_empty());
        assert!(r.excess_second.is_empty());
        assert_eq!(r.joint, vec![(1, 1.5), (3, 1.5)]);
    }

    #[test]
    fn plus_and_min_decomposition() {
        // q_il(x) = 2, q_jl(z) = 1 with i = j: excess 1/0, joint 1
        let model = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, |x: &[f64], k, l| {
                if l == k + 1 {
                    if x[0] > 0.0 {
                        2.0
                    } else {
                        1.0
                    }
                } else {
                    0.0
                }
            }))
            .build()
            .unwrap();
        let r = coupled_switch_rates(&model, &[1.0], 0, &[-1.0], 0).unwrap();
        assert_eq!(r.excess_first, vec![(1, 1.0)]);
        assert!(r.excess_second.is_empty());
        assert_eq!(r.joint, vec![(1, 1.0)]);
        // marginal totals reproduce the rows
        assert_eq!(r.first_marginal_total(), 2.0);
        assert_eq!(r.second_marginal_total(), 1.0);
    }

    #[test]
    fn disjoint_targets_have_no_joint_part() {
        // from different regimes with nearest-neighbor unit rates the
        // target sets {i±1} and {j±1} are disjoint for |i−j| > 2
        let model = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, |_x, _k, _l| 1.0))
            .build()
            .unwrap();
        let r = coupled_switch_rates(&model, &[0.0], 1, &[0.0], 8).unwrap();
        assert!(r.joint.is_empty());
        assert_eq!(r.first_marginal_total(), 2.0);
        assert_eq!(r.second_marginal_total(), 2.0);
        assert_eq!(r.total(), 4.0);
    }
}
