//! Property tests for the structural invariants: partition/displacement
//! consistency, rate conservation of the basic coupling, the auxiliary
//! generator's row structure, and path bookkeeping.

use proptest::prelude::*;

use rsjd_core::coupling::coupled_switch_rates;
use rsjd_core::measure_change::build_qhat;
use rsjd_core::model::{families, JumpMeasure, MarkLaw, RateMatrix};
use rsjd_core::simulate::{simulate_batch, simulate_hybrid, BatchOptions, SimConfig};
use rsjd_core::ModelSpec;

/// A banded rate matrix whose entries are frozen pseudo-random functions
/// of `(k, l)` scaled by a bounded function of `x`.
fn arb_model(kappa: usize, entries: Vec<f64>) -> ModelSpec {
    let base = entries;
    let width = 2 * kappa + 1;
    ModelSpec::builder(1)
        .rates(RateMatrix::new(kappa, move |x: &[f64], k, l| {
            let off = (l as i64 - k as i64 + kappa as i64) as usize;
            let e = base[(k * width + off) % base.len()];
            e * (0.5 + 0.5 / (1.0 + x[0] * x[0]))
        }))
        .build()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_consistent_with_row_and_displacement(
        kappa in 1usize..4,
        k in 0usize..6,
        x in -5.0f64..5.0,
        entries in proptest::collection::vec(0.0f64..3.0, 32),
        probe in 0.0f64..1.0,
    ) {
        let model = arb_model(kappa, entries);
        let row = model.q_row(&[x], k).unwrap();
        let partition = model.partition(&[x], k).unwrap();

        // band property
        for (l, _) in &row.entries {
            prop_assert!(l.abs_diff(k) <= kappa);
        }
        // total equals the sum of entries to accumulation round-off
        let sum: f64 = row.entries.iter().map(|(_, r)| r).sum();
        prop_assert!((sum - row.total).abs() <= 1e-12 * row.total.max(1.0));
        // length conservation, interval by interval
        let mut cursor = 0.0;
        for ((l, rate), (pl, a, b)) in row.entries.iter().zip(&partition.intervals) {
            prop_assert_eq!(l, pl);
            prop_assert_eq!(*a, cursor);
            prop_assert!((b - a - rate).abs() < 1e-15);
            cursor = *b;
        }
        prop_assert!((partition.total_length() - row.total).abs() <= 1e-12 * row.total.max(1.0));

        // displacement agrees with interval membership at an interior point
        for (l, a, b) in &partition.intervals {
            let r = a + probe * (b - a);
            if r < *b {
                prop_assert_eq!(partition.displacement(r), *l as i64 - k as i64);
            }
        }
        // at and past the total mass the displacement vanishes
        prop_assert_eq!(partition.displacement(row.total), 0);
        prop_assert_eq!(partition.displacement(row.total + 1.0), 0);
    }

    #[test]
    fn basic_coupling_conserves_marginal_rates(
        kappa in 1usize..4,
        i in 0usize..5,
        j in 0usize..5,
        x in -3.0f64..3.0,
        z in -3.0f64..3.0,
        entries in proptest::collection::vec(0.0f64..3.0, 32),
    ) {
        let model = arb_model(kappa, entries);
        let rates = coupled_switch_rates(&model, &[x], i, &[z], j).unwrap();
        let row_i = model.q_row(&[x], i).unwrap();
        let row_j = model.q_row(&[z], j).unwrap();

        // per-target reconstruction is exact: excess + joint = q_{·l}
        let lo = i.min(j).saturating_sub(kappa);
        let hi = i.max(j) + kappa;
        for l in lo..=hi {
            let e1: f64 = rates.excess_first.iter().filter(|(t, _)| *t == l).map(|(_, r)| r).sum();
            let e2: f64 = rates.excess_second.iter().filter(|(t, _)| *t == l).map(|(_, r)| r).sum();
            let jt: f64 = rates.joint.iter().filter(|(t, _)| *t == l).map(|(_, r)| r).sum();
            let qi = if l == i { 0.0 } else { row_i.rate_to(l) };
            let qj = if l == j { 0.0 } else { row_j.rate_to(l) };
            // (q − q∧q') + q∧q' re-rounds in the last ulp
            prop_assert!((e1 + jt - qi).abs() <= 1e-14 * qi.max(1.0));
            prop_assert!((e2 + jt - qj).abs() <= 1e-14 * qj.max(1.0));
        }
        prop_assert!((rates.first_marginal_total() - row_i.total).abs() < 1e-12);
        prop_assert!((rates.second_marginal_total() - row_j.total).abs() < 1e-12);
    }

    #[test]
    fn qhat_rows_conserve_with_2kappa_units(kappa in 1usize..5, k in 0usize..12) {
        let aux = build_qhat(kappa, 32).unwrap();
        let targets = aux.row_targets(k);
        prop_assert_eq!(targets.len(), 2 * kappa);
        prop_assert!(targets.iter().all(|l| *l != k));
        // adjacency: interior rows stay within the band
        if k >= kappa {
            prop_assert!(targets.iter().all(|l| l.abs_diff(k) <= kappa));
        } else {
            prop_assert!(targets.iter().all(|l| *l <= 2 * kappa));
        }
        // conservation: diagonal −2κ plus 2κ unit entries
        let row_sum = -(aux.exit_rate()) + targets.len() as f64;
        prop_assert_eq!(row_sum, 0.0);
    }
}

#[test]
fn switch_bookkeeping_on_hybrid_paths() {
    // Λ is constant between epochs, switch displacements stay in the
    // band, and X does not move at switch epochs (switch times are not
    // jump times).
    let model = families::coupled_ou_instance(1.0, 1.0);
    let cfg = SimConfig::new(5.0, 0.02).with_seed(100);
    for idx in 0..20 {
        let path = simulate_hybrid(&model, &[0.3], 1, &cfg, idx).unwrap();
        for sw in &path.switches {
            assert!(sw.from.abs_diff(sw.to) <= model.kappa());
            assert!(sw.from != sw.to);
            for jump in &path.jumps {
                assert_ne!(jump.time, sw.time, "switch epochs move X only via the SDE");
            }
        }
        // regimes change only at recorded switch epochs
        let mut sw_iter = path.switches.iter().peekable();
        for w in 1..path.times.len() {
            if path.regimes[w] != path.regimes[w - 1] {
                let sw = sw_iter.next().expect("regime change without a switch event");
                assert_eq!(sw.time, path.times[w]);
                assert_eq!(sw.from, path.regimes[w - 1]);
                assert_eq!(sw.to, path.regimes[w]);
            }
        }
    }
}

#[test]
fn grid_refinement_moves_mean_within_monte_carlo_error() {
    // halving dt changes the terminal mean estimate by less than the
    // combined 3-SE Monte Carlo error (weak convergence)
    let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
    let opts = BatchOptions::evenly_spaced(1.0, 1);
    let n = 4_000;
    let coarse = simulate_batch(
        &model,
        &[1.0],
        0,
        &SimConfig::new(1.0, 0.02).with_seed(500).with_paths(n),
        &opts,
    )
    .unwrap();
    let fine = simulate_batch(
        &model,
        &[1.0],
        0,
        &SimConfig::new(1.0, 0.01).with_seed(501).with_paths(n),
        &opts,
    )
    .unwrap();
    let diff = (coarse.mean_coord[0][0] - fine.mean_coord[0][0]).abs();
    let combined = (coarse.se_coord[0][0].powi(2) + fine.se_coord[0][0].powi(2)).sqrt();
    assert!(
        diff <= 3.0 * combined,
        "refinement shift {diff} vs 3·SE {}",
        3.0 * combined
    );
}

#[test]
fn explosion_guard_hits_decrease_with_radius() {
    // start near the small guard: hits at R = 10 vanish by R = 1000
    let model = families::single_regime_ou(-1.0, 1.0, 0.5, 1.0);
    let mut fractions = Vec::new();
    for radius in [10.0, 100.0, 1000.0] {
        let cfg = SimConfig::new(2.0, 0.01)
            .with_seed(7)
            .with_paths(400)
            .with_guard(radius);
        let stats = simulate_batch(&model, &[8.0], 0, &cfg, &BatchOptions::evenly_spaced(2.0, 1))
            .unwrap();
        fractions.push(stats.n_exploded as f64 / stats.n_paths as f64);
    }
    assert!(
        fractions[0] >= fractions[1] && fractions[1] >= fractions[2],
        "guard-hit fractions should not increase with R: {fractions:?}"
    );
    assert_eq!(fractions[2], 0.0);
}

#[test]
fn certified_instance_sup_moment_stays_bounded() {
    // on the worked drift-certified instance the second moment cannot
    // grow with the horizon: E|X(t)|² at late checkpoints stays within
    // noise of the early plateau
    let model = families::coupled_ou_instance(1.0, 1.0);
    let cfg = SimConfig::new(8.0, 0.01).with_seed(42).with_paths(2_000);
    let opts = BatchOptions {
        checkpoints: vec![2.0, 4.0, 6.0, 8.0],
        burn_in: 0.0,
    };
    let stats = simulate_batch(&model, &[1.0], 0, &cfg, &opts).unwrap();
    let first = stats.mean_norm_sq[0];
    for (m, se) in stats.mean_norm_sq.iter().zip(&stats.se_norm_sq) {
        assert!(
            *m <= first + 6.0 * se + 0.2,
            "second moment grew along the horizon: {:?}",
            stats.mean_norm_sq
        );
    }
    assert_eq!(stats.n_exploded, 0);
}

#[test]
fn compensated_truncation_shifts_drift() {
    // a compensated one-sided mark law must subtract ∫cΠ from the drift:
    // marks at +1 with mass 2 and c = u give compensator 2, so the net
    // drift of dX = 0·dt + jumps − compensator is ≈ 0 in mean
    let jm = JumpMeasure::new(
        2.0,
        MarkLaw::Discrete {
            atoms: vec![(vec![1.0], 1.0)],
        },
    )
    .unwrap()
    .compensated();
    let model = ModelSpec::builder(1)
        .jump_coeff(|_x, _k, u: &[f64], out: &mut [f64]| out[0] = u[0])
        .jump_measure(jm)
        .build()
        .unwrap();
    let cfg = SimConfig::new(1.0, 0.01).with_seed(3).with_paths(2_000);
    let stats = simulate_batch(&model, &[0.0], 0, &cfg, &BatchOptions::evenly_spaced(1.0, 1))
        .unwrap();
    let mean = stats.mean_coord[0][0];
    let se = stats.se_coord[0][0];
    assert!(mean.abs() < 3.0 * se + 0.05, "compensated mean {mean} ± {se}");
}
