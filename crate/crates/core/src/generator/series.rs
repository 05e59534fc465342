//! Jump-count series for the regime-frozen transition kernel.
//!
//! For a regime whose pure diffusion has a closed-form Gaussian kernel,
//! the transition probability `P^{(k)}(t, x, A)` expands as a series over
//! the number of jumps on `[0, t]`: the term with `m` jumps carries the
//! Poisson weight `e^{−tΠ(U)} (tΠ(U))^m / m!` and routes through `m`
//! nested Gaussian legs with jump displacements between them. Jump times
//! conditional on the count are uniform order statistics, so each term is
//! estimated by Monte Carlo over times, marks and intermediate states,
//! with the final leg's Gaussian mass evaluated in closed form.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::numerics::{gaussian_interval_mass, Welford};
use crate::rng::{StreamFactory, StreamKind};

/// One retained series term.
#[derive(Debug, Clone, Copy)]
pub struct SeriesTerm {
    /// Number of jumps this term accounts for.
    pub jumps: usize,
    /// Poisson weight `e^{−tΠ(U)} (tΠ(U))^jumps / jumps!`.
    pub weight: f64,
    /// Estimated conditional probability of landing in the target set.
    pub value: f64,
    /// Monte Carlo standard error of `value` (zero for the jump-free term).
    pub se: f64,
}

impl SeriesTerm {
    pub fn contribution(&self) -> f64 {
        self.weight * self.value
    }
}

/// Truncated series with its Poisson remainder bound.
#[derive(Debug, Clone)]
pub struct SeriesKernel {
    pub regime: usize,
    pub t: f64,
    pub x0: f64,
    pub target: (f64, f64),
    pub terms: Vec<SeriesTerm>,
    /// Tail bound `Σ_{m ≥ n} e^{−tΠ(U)} (tΠ(U))^m / m!` for `n` retained
    /// terms.
    pub remainder_bound: f64,
}

impl SeriesKernel {
    /// Truncated probability estimate.
    pub fn total(&self) -> f64 {
        self.terms.iter().map(SeriesTerm::contribution).sum()
    }

    pub fn total_se(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| (t.weight * t.se).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

fn poisson_weight(lambda_t: f64, m: usize) -> f64 {
    // e^{−λt} (λt)^m / m!, computed in log space for stability
    if lambda_t == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let mut log_w = -lambda_t + m as f64 * lambda_t.ln();
    for j in 1..=m {
        log_w -= (j as f64).ln();
    }
    log_w.exp()
}

fn poisson_tail(lambda_t: f64, from: usize) -> f64 {
    let mut tail = 0.0;
    for m in from..(from + 400) {
        let w = poisson_weight(lambda_t, m);
        tail += w;
        if w < 1e-300 && m > from {
            break;
        }
    }
    tail
}

/// Estimate `P^{(k)}(t, x0, [lo, hi])` by the truncated jump-count series.
///
/// Requires a one-dimensional model whose regime-`k` pure diffusion has a
/// registered Gaussian kernel (the OU/affine families).
pub fn transition_series(
    model: &ModelSpec,
    k: usize,
    t: f64,
    x0: f64,
    target: (f64, f64),
    n_terms: usize,
    mark_budget: usize,
    seed: u64,
) -> Result<SeriesKernel> {
    if model.dim() != 1 {
        return Err(Error::Unsupported(
            "the jump-count series is implemented for one-dimensional models".into(),
        ));
    }
    let kernel = model.gauss_kernel(k).ok_or_else(|| {
        Error::Unsupported(format!(
            "regime {k} has no closed-form Gaussian diffusion kernel"
        ))
    })?;
    if n_terms == 0 {
        return Err(Error::InvalidConfig("kernel-series: need at least one term".into()));
    }
    let (lo, hi) = target;
    if !(hi > lo) {
        return Err(Error::InvalidConfig("kernel-series: empty target box".into()));
    }
    let mass = model.jump().total_mass();
    let lambda_t = mass * t;
    let factory = StreamFactory::new(seed);

    let mut terms = Vec::with_capacity(n_terms);
    // jump-free term: closed form, no sampling
    let (mean0, var0) = kernel.mean_var(x0, t);
    terms.push(SeriesTerm {
        jumps: 0,
        weight: poisson_weight(lambda_t, 0),
        value: gaussian_interval_mass(mean0, var0, lo, hi),
        se: 0.0,
    });

    for m in 1..n_terms {
        let weight = poisson_weight(lambda_t, m);
        if weight == 0.0 {
            terms.push(SeriesTerm {
                jumps: m,
                weight,
                value: 0.0,
                se: 0.0,
            });
            continue;
        }
        // order-preserving parallel map, sequential accumulation: the
        // estimate is identical for any worker count
        let masses: Vec<f64> = (0..mark_budget as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = factory.stream((m as u64) << 32 | rep, StreamKind::Marks);
                // jump epochs: uniform order statistics on [0, t]
                let mut times: Vec<f64> = (0..m).map(|_| t * rng.random::<f64>()).collect();
                times.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut y = x0;
                let mut prev = 0.0;
                for &tau in &times {
                    let (mean, var) = kernel.mean_var(y, tau - prev);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y = mean + var.max(0.0).sqrt() * z;
                    let mark = model.jump().sample_mark(&mut rng);
                    y += model.jump_disp(&[y], k, &mark)[0];
                    prev = tau;
                }
                let (mean, var) = kernel.mean_var(y, t - prev);
                gaussian_interval_mass(mean, var, lo, hi)
            })
            .collect();
        let mut acc = Welford::default();
        for v in masses {
            acc.push(v);
        }
        terms.push(SeriesTerm {
            jumps: m,
            weight,
            value: acc.mean(),
            se: acc.std_error(),
        });
    }

    Ok(SeriesKernel {
        regime: k,
        t,
        x0,
        target,
        terms,
        remainder_bound: poisson_tail(lambda_t, n_terms),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::families;

    #[test]
    fn zero_mass_reduces_to_gaussian_kernel() {
        let model = families::single_regime_ou(-1.0, 1.0, 0.0, 0.0);
        let s = transition_series(&model, 0, 1.0, 0.3, (0.0, 1.0), 4, 100, 1).unwrap();
        assert_eq!(s.terms[0].weight, 1.0);
        let kern = model.gauss_kernel(0).unwrap();
        let (mean, var) = kern.mean_var(0.3, 1.0);
        let exact = gaussian_interval_mass(mean, var, 0.0, 1.0);
        assert!((s.total() - exact).abs() < 1e-15);
        assert_eq!(s.remainder_bound, 0.0);
    }

    #[test]
    fn first_term_weight_is_exp_minus_lambda_t() {
        // tΠ(U) = 1 → leading weight e^{−1} ≈ 0.3679
        let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
        let s = transition_series(&model, 0, 1.0, 0.0, (0.0, 1.0), 3, 200, 1).unwrap();
        assert!((s.terms[0].weight - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s.terms[0].weight - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn remainder_equals_poisson_tail() {
        let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
        let s = transition_series(&model, 0, 1.0, 0.0, (0.0, 1.0), 6, 50, 1).unwrap();
        // independent summation of the tail Σ_{m≥6} e^{−1}/m!
        let e = std::f64::consts::E.recip();
        let mut fact = 1.0f64;
        let mut head = 0.0;
        for m in 0..6usize {
            if m > 0 {
                fact *= m as f64;
            }
            head += e / fact;
        }
        let tail = 1.0 - head;
        assert!(
            (s.remainder_bound - tail).abs() <= 1e-15,
            "{} vs {tail}",
            s.remainder_bound
        );
    }

    #[test]
    fn series_bitwise_deterministic_across_pools() {
        let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let s = transition_series(&model, 0, 1.0, 0.3, (0.0, 1.0), 5, 5_000, 3).unwrap();
                s.terms
                    .iter()
                    .flat_map(|t| [t.value.to_bits(), t.se.to_bits()])
                    .collect::<Vec<u64>>()
            })
        };
        assert_eq!(run(1), run(4));
        // standard errors are finite for every sampled term
        let s = transition_series(&model, 0, 1.0, 0.3, (0.0, 1.0), 5, 5_000, 3).unwrap();
        for t in &s.terms {
            assert!(t.se.is_finite(), "{t:?}");
        }
    }

    #[test]
    fn truncated_total_monotone_in_terms() {
        // terms are nonnegative, so the truncated total grows with the
        // retained count while the remainder bound shrinks
        let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
        let short = transition_series(&model, 0, 1.0, 0.0, (0.0, 1.0), 2, 400, 9).unwrap();
        let long = transition_series(&model, 0, 1.0, 0.0, (0.0, 1.0), 6, 400, 9).unwrap();
        assert!(long.total() >= short.total() - 1e-15);
        assert!(long.remainder_bound < short.remainder_bound);
    }

    #[test]
    fn unsupported_without_gaussian_kernel() {
        let model = crate::ModelSpec::builder(1)
            .drift(|x: &[f64], _k, out: &mut [f64]| out[0] = -x[0].tanh())
            .build()
            .unwrap();
        let err = transition_series(&model, 0, 1.0, 0.0, (0.0, 1.0), 3, 10, 1).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }
}
