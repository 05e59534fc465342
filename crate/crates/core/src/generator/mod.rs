//! The extended generator `𝒜 = ℒ_k + Q(x)` evaluated on test functions.
//!
//! `ℒ_k f = ½ tr(a ∇²f) + ⟨b, ∇f⟩ + ∫ [f(x + c(x,k,u), k) − f(x,k)] Π(du)`
//! (with the gradient compensation term subtracted when the jump measure
//! is a compensated truncation), and
//! `Q(x) f = Σ_{|l−k|≤κ} q_kl(x) [f(x,l) − f(x,k)]`.

mod dynkin;
mod series;
pub mod test_functions;

pub use dynkin::{dynkin_residual, DynkinOptions, DynkinResult};
pub use series::{transition_series, SeriesKernel, SeriesTerm};
pub use test_functions::TestFunction;

use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::model::ModelSpec;

/// Evaluation options for the jump integral.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorOptions {
    /// Monte Carlo sample budget for custom mark laws (quadrature-backed
    /// laws ignore it).
    pub mark_budget: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self { mark_budget: 4_096 }
    }
}

/// Decomposition of `𝒜 f(x, k)`.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorValue {
    /// Drift plus diffusion part of `ℒ_k`.
    pub local: f64,
    /// Jump integral part of `ℒ_k`.
    pub jump: f64,
    /// Switching part `Q(x) f`.
    pub switching: f64,
    /// Monte Carlo standard error of the jump part (zero for quadrature).
    pub jump_se: f64,
    /// Set when the jump part was sampled with an inadequate budget.
    pub flagged: bool,
}

impl GeneratorValue {
    pub fn total(&self) -> f64 {
        self.local + self.jump + self.switching
    }
}

const MIN_MC_BUDGET: usize = 64;

/// Evaluate `𝒜 f(x, k)` part by part.
pub fn apply_generator(
    model: &ModelSpec,
    f: &TestFunction,
    x: &[f64],
    k: usize,
    opts: &GeneratorOptions,
    rng: &mut ChaCha12Rng,
) -> Result<GeneratorValue> {
    let d = model.dim();
    let fx = f.eval(x, k);
    let grad = f.grad(x, k);
    let hess = f.hess(x, k);

    // local part: ½ tr(σσ' ∇²f) + ⟨b, ∇f⟩
    let b = model.drift_vec(x, k);
    let sigma = model.diffusion_mat(x, k);
    let mut local = 0.0;
    for i in 0..d {
        local += b[i] * grad[i];
    }
    // tr(σσ' H) = Σ_{i,j} (σσ')_{ij} H_{ji}; σσ' is symmetric
    for i in 0..d {
        for j in 0..d {
            let mut a_ij = 0.0;
            for m in 0..d {
                a_ij += sigma[i * d + m] * sigma[j * d + m];
            }
            local += 0.5 * a_ij * hess[j * d + i];
        }
    }

    // jump part
    let compensated = model.jump().is_compensated();
    let (jump, jump_se) = model.jump().integrate(
        &|u| {
            let c = model.jump_disp(x, k, u);
            let shifted: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a + b).collect();
            let mut v = f.eval(&shifted, k) - fx;
            if compensated {
                for i in 0..d {
                    v -= grad[i] * c[i];
                }
            }
            v
        },
        opts.mark_budget,
        rng,
    );
    let flagged =
        !model.jump().has_quadrature() && model.jump().total_mass() > 0.0 && opts.mark_budget < MIN_MC_BUDGET;

    // switching part over the band
    let row = model.q_row(x, k)?;
    let mut switching = 0.0;
    for (l, rate) in &row.entries {
        switching += rate * (f.eval(x, *l) - fx);
    }

    Ok(GeneratorValue {
        local,
        jump,
        switching,
        jump_se,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::families;
    use crate::model::{ModelSpec, RateMatrix};
    use crate::numerics::integrate_exp_halfline;
    use crate::rng::{StreamFactory, StreamKind};

    fn rng() -> ChaCha12Rng {
        StreamFactory::new(1).stream(0, StreamKind::Probe)
    }

    /// Independent quadrature oracle for the mark second moment
    /// `J = ∫ z² · ½ e^{−|z|} dz`.
    fn mark_second_moment_oracle() -> f64 {
        // symmetric: 2 · ∫_0^∞ z² · ½ e^{−z} dz
        integrate_exp_halfline(|z| z * z, 48)
    }

    #[test]
    fn ou_example_generator_value() {
        // V(x,k) = (k+1)x² on the worked instance, regime 0:
        // 𝒜V(x,0) = (2α₀ + q₀₁(x))x² + σ₀² + J·β₀² with J from quadrature.
        let j = mark_second_moment_oracle();
        assert!((j - 2.0).abs() < 1e-12, "oracle J = {j}");
        let model = families::coupled_ou_instance(1.0, 1.0);
        let f = TestFunction::regime_weighted_norm_sq();
        let x = [1.3];
        let gv = apply_generator(&model, &f, &x, 0, &GeneratorOptions::default(), &mut rng()).unwrap();
        // α₀ = −2, σ₀² = 1, β₀² = 1, q₀₁ = 1
        let expected = (2.0 * -2.0 + 1.0) * x[0] * x[0] + 1.0 + j * 1.0;
        assert!(
            (gv.total() - expected).abs() < 1e-6,
            "{} vs {expected}",
            gv.total()
        );
        assert_eq!(gv.total(), gv.local + gv.jump + gv.switching);
    }

    #[test]
    fn constant_function_annihilated() {
        let model = families::coupled_ou_instance(1.0, 1.0);
        let f = TestFunction::constant(3.5);
        let gv = apply_generator(&model, &f, &[0.7], 2, &GeneratorOptions::default(), &mut rng())
            .unwrap();
        assert_eq!(gv.local, 0.0);
        assert!(gv.jump.abs() < 1e-12);
        assert_eq!(gv.switching, 0.0);
    }

    #[test]
    fn regime_indicator_reads_off_rate() {
        // f(x,k) = k, two-regime constant rates: 𝒜f(x,0) = q₀₁(x)
        let model = ModelSpec::builder(1)
            .rates(RateMatrix::new(1, |_x, k, l| {
                if k == 0 && l == 1 {
                    0.7
                } else {
                    0.0
                }
            }))
            .build()
            .unwrap();
        let f = TestFunction::regime();
        let gv = apply_generator(&model, &f, &[0.0], 0, &GeneratorOptions::default(), &mut rng())
            .unwrap();
        assert!((gv.total() - 0.7).abs() < 1e-12);
        assert_eq!(gv.local, 0.0);
    }

    #[test]
    fn small_mc_budget_is_flagged() {
        // custom mark laws integrate by Monte Carlo; a starved budget
        // comes back flagged with a nonzero standard error
        let jm = crate::model::JumpMeasure::new(
            1.0,
            crate::model::MarkLaw::Custom {
                dim: 1,
                sampler: std::sync::Arc::new(|rng: &mut ChaCha12Rng| {
                    use rand::Rng;
                    vec![rng.random::<f64>() * 2.0 - 1.0]
                }),
            },
        )
        .unwrap();
        let model = crate::ModelSpec::builder(1)
            .jump_coeff(|_x, _k, u: &[f64], out: &mut [f64]| out[0] = u[0])
            .jump_measure(jm)
            .build()
            .unwrap();
        let f = TestFunction::norm_sq();
        let gv = apply_generator(
            &model,
            &f,
            &[0.5],
            0,
            &GeneratorOptions { mark_budget: 8 },
            &mut rng(),
        )
        .unwrap();
        assert!(gv.flagged);
        assert!(gv.jump_se > 0.0);
        let ok = apply_generator(
            &model,
            &f,
            &[0.5],
            0,
            &GeneratorOptions { mark_budget: 20_000 },
            &mut rng(),
        )
        .unwrap();
        assert!(!ok.flagged);
    }

    #[test]
    fn finite_difference_consistency_order_two() {
        // analytic vs FD local part on a smooth non-polynomial function
        let model = families::single_regime_ou(-1.0, 0.8, 0.0, 0.0);
        let with_analytic = TestFunction::new("cos", |x: &[f64], _k| x[0].cos())
            .with_grad(|x: &[f64], _k| vec![-x[0].sin()])
            .with_hess(|x: &[f64], _k| vec![-x[0].cos()]);
        let fd_only = TestFunction::new("cos", |x: &[f64], _k| x[0].cos());
        let a = apply_generator(&model, &with_analytic, &[0.9], 0, &GeneratorOptions::default(), &mut rng())
            .unwrap();
        let b = apply_generator(&model, &fd_only, &[0.9], 0, &GeneratorOptions::default(), &mut rng())
            .unwrap();
        assert!(
            (a.local - b.local).abs() < 5e-5,
            "analytic {} vs fd {}",
            a.local,
            b.local
        );
    }

    #[test]
    fn finite_difference_error_shrinks_like_step_squared() {
        // |analytic − FD| at steps 1e−2 and 1e−3 drops by ≈ 100×
        let f = TestFunction::new("cubic-cos", |x: &[f64], _k| x[0].powi(3) * x[0].cos());
        let analytic_dd = |x: f64| {
            // d²/dx² x³cos x = 6x cos x − 6x² sin x − x³ cos x
            6.0 * x * x.cos() - 6.0 * x * x * x.sin() - x.powi(3) * x.cos()
        };
        let x = [0.8];
        let exact = analytic_dd(0.8);
        let err_coarse = (f.hess_fd(&x, 0, 1e-2)[0] - exact).abs();
        let err_fine = (f.hess_fd(&x, 0, 1e-3)[0] - exact).abs();
        assert!(err_fine < err_coarse * 0.05, "O(step²): {err_coarse} -> {err_fine}");
    }
}
