//! One function per subcommand. Every command returns `true` when the
//! experiment's own success criterion held (used by `--expect-pass`).

use serde::Deserialize;

use rsjd_core::coupling::contraction_estimate;
use rsjd_core::ergodicity::{
    check_drift, check_linearized, empirical_convergence, fit_drift, jump_tail_constant,
    ou_example_conditions, ConvergenceOptions, LinearizedRegime, LinearizedSpec, OuExampleParams,
    RegionSampler,
};
use rsjd_core::generator::{
    apply_generator, dynkin_residual, transition_series, DynkinOptions, GeneratorOptions,
};
use rsjd_core::measure_change::{build_qhat, weighted_expectation};
use rsjd_core::model::families::{self, RateFnSpec, RegimeSeq};
use rsjd_core::model::validate::{probe_cloud, validate_assumptions, CheckStatus};
use rsjd_core::rng::{StreamFactory, StreamKind};
use rsjd_core::simulate::{simulate_batch, simulate_hybrid};
use rsjd_core::ModelSpec;

use crate::config::{FileConfig, FunctionSpec};
use crate::output::OutputDir;
use crate::CliError;

fn build_model(cfg: &FileConfig) -> Result<ModelSpec, CliError> {
    Ok(families::build_model(cfg.model()?)?)
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

pub fn simulate(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let run = cfg.run()?;
    let sim = run.sim_config(seed)?;
    let (x0, k0) = run.initial(model.dim())?;
    let opts = run.batch_options(sim.t_end);

    let stats = simulate_batch(&model, &x0, k0, &sim, &opts)?;

    // a few fully recorded paths as JSON-lines
    let n_records = cfg.output.path_records.unwrap_or(4).min(sim.n_paths);
    let mut recorded = Vec::new();
    for idx in 0..n_records as u64 {
        recorded.push(simulate_hybrid(&model, &x0, k0, &sim, idx)?);
    }
    let refs: Vec<(u64, &rsjd_core::HybridPath)> = recorded
        .iter()
        .enumerate()
        .map(|(i, p)| (i as u64, p))
        .collect();
    out.write_paths_jsonl("paths.jsonl", &refs, cfg.output.record_stride.unwrap_or(1))?;

    let mut w = out.csv_writer("summary.csv")?;
    let mut header = vec!["t".to_string()];
    for i in 0..model.dim() {
        header.push(format!("mean_x{i}"));
        header.push(format!("se_x{i}"));
    }
    header.extend(
        ["mean_norm_sq", "se_norm_sq", "mean_regime", "se_regime"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header).map_err(csv_err)?;
    for (i, t) in stats.checkpoints.iter().enumerate() {
        let mut row = vec![format!("{t}")];
        for d in 0..model.dim() {
            row.push(format!("{}", stats.mean_coord[i][d]));
            row.push(format!("{}", stats.se_coord[i][d]));
        }
        row.push(format!("{}", stats.mean_norm_sq[i]));
        row.push(format!("{}", stats.se_norm_sq[i]));
        row.push(format!("{}", stats.mean_regime[i]));
        row.push(format!("{}", stats.se_regime[i]));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("summary.csv: {e}")))?;

    let report = format!(
        "paths: {}\ncompleted: {}\nexploded: {}\nceiling: {}\nsup |X|^2 mean: {} (se {})\nsup regime^2 mean: {} (se {})\ntime-average |X|^2: {} (se {})\n",
        stats.n_paths,
        stats.n_completed,
        stats.n_exploded,
        stats.n_ceiling,
        stats.sup_norm_sq_mean,
        stats.sup_norm_sq_se,
        stats.sup_regime_sq_mean,
        stats.sup_regime_sq_se,
        stats.time_avg_norm_sq_mean,
        stats.time_avg_norm_sq_se,
    );
    out.write_text("run_report.txt", &report)?;
    println!("{report}");
    Ok(stats.n_exploded == 0 && stats.n_ceiling == 0)
}

// ---------------------------------------------------------------------
// couple
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoupleExperiment {
    gaps: Vec<f64>,
    checkpoints: Vec<f64>,
    replicas: usize,
}

pub fn couple(cfg: &FileConfig, seed: Option<u64>, out: &mut OutputDir) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let run = cfg.run()?;
    let sim = run.sim_config(seed)?;
    let (x0, k0) = run.initial(model.dim())?;
    let exp: CoupleExperiment = cfg.experiment()?;
    if exp.gaps.is_empty() || exp.checkpoints.is_empty() || exp.replicas < 2 {
        return Err(CliError::Config(
            "experiment: gaps, checkpoints and replicas (≥ 2) required".into(),
        ));
    }

    let mut w = out.csv_writer("couple.csv")?;
    w.write_record([
        "gap",
        "t",
        "mean_distance",
        "se_distance",
        "p_decouple",
        "p_decouple_se",
        "fitted_rate",
        "fit_r2",
        "envelope_rate",
    ])
    .map_err(csv_err)?;
    let mut all_bounds_hold = true;
    for &gap in &exp.gaps {
        let mut z0 = x0.clone();
        z0[0] += gap;
        let report =
            contraction_estimate(&model, &x0, &z0, k0, &exp.checkpoints, exp.replicas, &sim)?;
        all_bounds_hold &= report.bound_holds();
        for (i, t) in report.checkpoints.iter().enumerate() {
            w.write_record([
                format!("{}", report.gap),
                format!("{t}"),
                format!("{}", report.mean_distance[i]),
                format!("{}", report.se_distance[i]),
                format!("{}", report.p_decouple),
                format!("{}", report.p_decouple_se),
                format!("{}", report.fitted_rate),
                format!("{}", report.fit_r2),
                format!("{}", report.envelope_rate),
            ])
            .map_err(csv_err)?;
        }
        println!(
            "gap {gap}: P(decouple ≤ T) = {} ± {}, fitted rate {} (R² {:.3})",
            report.p_decouple, report.p_decouple_se, report.fitted_rate, report.fit_r2
        );
    }
    w.flush().map_err(|e| CliError::Io(format!("couple.csv: {e}")))?;
    Ok(all_bounds_hold)
}

// ---------------------------------------------------------------------
// generator-test
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorExperiment {
    function: FunctionSpec,
    #[serde(default)]
    points: Vec<Vec<f64>>,
    #[serde(default)]
    regimes: Vec<usize>,
    /// Horizon of the Dynkin residual experiment (skipped when absent).
    dynkin_t: Option<f64>,
    #[serde(default = "default_dynkin_paths")]
    dynkin_paths: usize,
    #[serde(default = "default_mark_budget")]
    mark_budget: usize,
}

fn default_dynkin_paths() -> usize {
    4_000
}

fn default_mark_budget() -> usize {
    4_096
}

pub fn generator_test(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let run = cfg.run()?;
    let sim = run.sim_config(seed)?;
    let (x0, k0) = run.initial(model.dim())?;
    let exp: GeneratorExperiment = cfg.experiment()?;
    let f = exp.function.build()?;

    let points = if exp.points.is_empty() {
        vec![x0.clone()]
    } else {
        exp.points.clone()
    };
    let regimes = if exp.regimes.is_empty() {
        vec![k0]
    } else {
        exp.regimes.clone()
    };

    let mut w = out.csv_writer("generator.csv")?;
    w.write_record(["x", "k", "local", "jump", "switching", "total", "jump_se"])
        .map_err(csv_err)?;
    let factory = StreamFactory::new(sim.seed);
    let mut rng = factory.stream(0, StreamKind::Marks);
    let gopts = GeneratorOptions {
        mark_budget: exp.mark_budget,
    };
    for x in &points {
        for &k in &regimes {
            let gv = apply_generator(&model, &f, x, k, &gopts, &mut rng)?;
            w.write_record([
                format!("{x:?}"),
                format!("{k}"),
                format!("{}", gv.local),
                format!("{}", gv.jump),
                format!("{}", gv.switching),
                format!("{}", gv.total()),
                format!("{}", gv.jump_se),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Io(format!("generator.csv: {e}")))?;

    let mut pass = true;
    if let Some(t) = exp.dynkin_t {
        let res = dynkin_residual(
            &model,
            &f,
            &x0,
            k0,
            t,
            &sim,
            &DynkinOptions {
                n_paths: exp.dynkin_paths,
                mark_budget: exp.mark_budget,
            },
        )?;
        // O(dt) bias allowance with a generous constant
        let allowance = 3.0 * res.std_error + 10.0 * sim.dt * (1.0 + res.residual.abs());
        pass = res.residual.abs() <= allowance;
        let text = format!(
            "dynkin residual: {} (se {}, paths {}, excluded {})\nallowance: {}\nverdict: {}\n",
            res.residual,
            res.std_error,
            res.n_used,
            res.excluded,
            allowance,
            if pass { "PASS" } else { "FAIL" }
        );
        out.write_text("dynkin.txt", &text)?;
        println!("{text}");
    }
    Ok(pass)
}

// ---------------------------------------------------------------------
// kernel-series
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesExperiment {
    regime: usize,
    t: f64,
    x0: f64,
    target_lo: f64,
    target_hi: f64,
    #[serde(default = "default_terms")]
    terms: usize,
    #[serde(default = "default_series_budget")]
    mark_budget: usize,
    /// Cross-check against direct Monte Carlo of the regime-frozen
    /// process.
    #[serde(default)]
    compare_direct: bool,
    #[serde(default = "default_direct_paths")]
    direct_paths: usize,
}

fn default_terms() -> usize {
    6
}

fn default_series_budget() -> usize {
    20_000
}

fn default_direct_paths() -> usize {
    100_000
}

pub fn kernel_series(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let run = cfg.run()?;
    let sim = run.sim_config(seed)?;
    let exp: SeriesExperiment = cfg.experiment()?;

    let series = transition_series(
        &model,
        exp.regime,
        exp.t,
        exp.x0,
        (exp.target_lo, exp.target_hi),
        exp.terms,
        exp.mark_budget,
        sim.seed,
    )?;

    let mut w = out.csv_writer("series.csv")?;
    w.write_record(["jumps", "weight", "value", "se", "contribution"])
        .map_err(csv_err)?;
    for term in &series.terms {
        w.write_record([
            format!("{}", term.jumps),
            format!("{}", term.weight),
            format!("{}", term.value),
            format!("{}", term.se),
            format!("{}", term.contribution()),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("series.csv: {e}")))?;

    let mut pass = true;
    let mut text = format!(
        "series total: {} (se {})\nremainder bound: {}\n",
        series.total(),
        series.total_se(),
        series.remainder_bound
    );
    if exp.compare_direct {
        let mut direct_cfg = sim.clone();
        direct_cfg.t_end = exp.t;
        direct_cfg.n_paths = exp.direct_paths;
        // freeze the regime by running the single-regime dynamics
        let frozen = freeze_regime(&model, exp.regime)?;
        let mut hits = 0u64;
        let mut total = 0u64;
        for idx in 0..exp.direct_paths as u64 {
            let p = simulate_hybrid(&frozen, &[exp.x0], 0, &direct_cfg, idx)?;
            if p.status == rsjd_core::simulate::Termination::Completed {
                let (x, _) = p.terminal();
                total += 1;
                if x[0] >= exp.target_lo && x[0] <= exp.target_hi {
                    hits += 1;
                }
            }
        }
        let p_direct = hits as f64 / total as f64;
        let se_direct = (p_direct * (1.0 - p_direct) / total as f64).sqrt();
        let combined =
            (se_direct.powi(2) + series.total_se().powi(2)).sqrt() + series.remainder_bound;
        let diff = (series.total() - p_direct).abs();
        pass = diff <= 3.0 * combined;
        text.push_str(&format!(
            "direct estimate: {p_direct} (se {se_direct}, n {total})\n|series − direct| = {diff} vs 3·combined = {}\nverdict: {}\n",
            3.0 * combined,
            if pass { "PASS" } else { "FAIL" }
        ));
    }
    out.write_text("series_report.txt", &text)?;
    println!("{text}");
    Ok(pass)
}

/// A copy of the model with the switching disabled and every coefficient
/// frozen at regime `k` (the regime-frozen jump diffusion).
fn freeze_regime(model: &ModelSpec, k: usize) -> Result<ModelSpec, CliError> {
    let m = model.clone();
    let m2 = model.clone();
    let m3 = model.clone();
    let kern = model.gauss_kernel(k);
    let mut builder = ModelSpec::builder(model.dim())
        .drift(move |x: &[f64], _k, out: &mut [f64]| m.drift_into(x, k, out))
        .diffusion(move |x: &[f64], _k, out: &mut [f64]| m2.diffusion_into(x, k, out))
        .jump_coeff(move |x: &[f64], _k, u: &[f64], out: &mut [f64]| {
            m3.jump_disp_into(x, k, u, out)
        })
        .jump_measure(model.jump().clone());
    if let Some(kk) = kern {
        builder = builder.gauss_kernel(move |_| Some(kk));
    }
    Ok(builder.build()?)
}

// ---------------------------------------------------------------------
// change-measure
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChangeMeasureExperiment {
    t: f64,
    n: usize,
    function: FunctionSpec,
    #[serde(default)]
    compare_direct: bool,
}

pub fn change_measure(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let run = cfg.run()?;
    let sim = run.sim_config(seed)?;
    let (x0, k0) = run.initial(model.dim())?;
    let exp: ChangeMeasureExperiment = cfg.experiment()?;
    let f = exp.function.build()?;
    let aux = build_qhat(model.kappa(), 64)?;

    let est = weighted_expectation(&model, &aux, &f, &x0, k0, exp.t, exp.n, &sim)?;
    let mut pass = !est.degenerate;
    // the weight must be an empirical probability density: Ê M_T = 1
    pass &= (est.weight_mean - 1.0).abs() <= 3.0 * est.weight_se;

    let mut w = out.csv_writer("change_measure.csv")?;
    w.write_record([
        "estimate",
        "se",
        "weight_mean",
        "weight_se",
        "ess",
        "zero_weight_fraction",
        "n",
    ])
    .map_err(csv_err)?;
    w.write_record([
        format!("{}", est.value),
        format!("{}", est.std_error),
        format!("{}", est.weight_mean),
        format!("{}", est.weight_se),
        format!("{}", est.ess),
        format!("{}", est.zero_weight_fraction),
        format!("{}", est.n_paths),
    ])
    .map_err(csv_err)?;
    w.flush()
        .map_err(|e| CliError::Io(format!("change_measure.csv: {e}")))?;

    let mut text = format!(
        "weighted estimate: {} (se {})\nweight mean: {} (se {})\neffective sample size: {:.1}\nzero-weight fraction: {:.4}\n",
        est.value, est.std_error, est.weight_mean, est.weight_se, est.ess, est.zero_weight_fraction
    );
    if exp.compare_direct {
        let mut dcfg = sim.clone();
        dcfg.t_end = exp.t;
        dcfg.n_paths = exp.n;
        let mut direct = rsjd_core::numerics::Welford::default();
        for idx in 0..exp.n as u64 {
            let p = simulate_hybrid(&model, &x0, k0, &dcfg, idx)?;
            if p.status == rsjd_core::simulate::Termination::Completed {
                let (x, kk) = p.terminal();
                direct.push(f.eval(x, kk));
            }
        }
        let combined = (est.std_error.powi(2) + direct.std_error().powi(2)).sqrt();
        let diff = (est.value - direct.mean()).abs();
        let agree = diff <= 3.0 * combined;
        pass &= agree;
        text.push_str(&format!(
            "direct estimate: {} (se {})\n|weighted − direct| = {diff} vs 3·combined = {}\nverdict: {}\n",
            direct.mean(),
            direct.std_error(),
            3.0 * combined,
            if agree { "PASS" } else { "FAIL" }
        ));
    }
    out.write_text("change_measure.txt", &text)?;
    println!("{text}");
    Ok(pass)
}

// ---------------------------------------------------------------------
// drift-check / drift-fit
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftExperiment {
    function: FunctionSpec,
    alpha: Option<f64>,
    gamma: Option<f64>,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_budget")]
    budget: usize,
    radius: f64,
    max_regime: usize,
    // fit-specific
    #[serde(default = "default_alpha_lo")]
    alpha_lo: f64,
    #[serde(default = "default_alpha_hi")]
    alpha_hi: f64,
    #[serde(default = "default_alpha_count")]
    alpha_count: usize,
    #[serde(default = "default_gamma_cap")]
    gamma_cap: f64,
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_budget() -> usize {
    1_000
}

fn default_alpha_lo() -> f64 {
    1e-2
}

fn default_alpha_hi() -> f64 {
    1e2
}

fn default_alpha_count() -> usize {
    200
}

fn default_gamma_cap() -> f64 {
    1e6
}

fn certificate_text(cert: &rsjd_core::ergodicity::DriftCertificate) -> String {
    let mut text = format!(
        "lyapunov: {}\nalpha: {}\ngamma: {}\nregion: {}\ntolerance: {}\nsamples: {}\nworst margin: {}\nstatus: {}\n",
        cert.lyapunov,
        cert.alpha,
        cert.gamma,
        cert.region,
        cert.tolerance,
        cert.samples.len(),
        cert.worst_margin(),
        if cert.passed() { "PASS" } else { "FAIL" }
    );
    if !cert.passed() {
        text.push_str("violations (x, k, V, AV, margin):\n");
        for &i in cert.violations.iter().take(50) {
            let s = &cert.samples[i];
            text.push_str(&format!(
                "  {:?} {} {} {} {}\n",
                s.x,
                s.regime,
                s.v,
                s.av,
                cert.margin(i)
            ));
        }
    }
    text
}

pub fn drift_check(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let exp: DriftExperiment = cfg.experiment()?;
    let f = exp.function.build()?;
    let alpha = exp
        .alpha
        .ok_or_else(|| CliError::Config("experiment.alpha: required".into()))?;
    let gamma = exp
        .gamma
        .ok_or_else(|| CliError::Config("experiment.gamma: required".into()))?;
    let sampler = RegionSampler {
        radius: exp.radius,
        max_regime: exp.max_regime,
    };
    let cert = check_drift(
        &model,
        &f,
        &sampler,
        alpha,
        gamma,
        exp.tolerance,
        exp.budget,
        seed.unwrap_or(0),
    )?;
    let text = certificate_text(&cert);
    out.write_text("certificate.txt", &text)?;
    let mut w = out.csv_writer("drift_samples.csv")?;
    w.write_record(["x", "k", "v", "av", "jump_se", "margin"])
        .map_err(csv_err)?;
    for (i, s) in cert.samples.iter().enumerate() {
        w.write_record([
            format!("{:?}", s.x),
            format!("{}", s.regime),
            format!("{}", s.v),
            format!("{}", s.av),
            format!("{}", s.jump_se),
            format!("{}", cert.margin(i)),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Io(format!("drift_samples.csv: {e}")))?;
    println!("{}", cert.summary());
    Ok(cert.passed())
}

pub fn drift_fit(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let exp: DriftExperiment = cfg.experiment()?;
    let f = exp.function.build()?;
    let sampler = RegionSampler {
        radius: exp.radius,
        max_regime: exp.max_regime,
    };
    // evaluate AV once with a nominal certificate, then fit over the grid
    let cert = check_drift(
        &model,
        &f,
        &sampler,
        1.0,
        f64::INFINITY.min(exp.gamma_cap),
        exp.tolerance,
        exp.budget,
        seed.unwrap_or(0),
    )?;
    let fitted = fit_drift(
        &cert.samples,
        (exp.alpha_lo, exp.alpha_hi, exp.alpha_count),
        exp.gamma_cap,
    )?;
    let text = match fitted {
        Some((alpha, gamma)) => format!("fit: alpha = {alpha}, gamma = {gamma}\nstatus: CERTIFICATE\n"),
        None => "fit: no certificate under the gamma cap\nstatus: NONE\n".to_string(),
    };
    out.write_text("drift_fit.txt", &text)?;
    println!("{text}");
    Ok(fitted.is_some())
}

// ---------------------------------------------------------------------
// linearized-check
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearizedRegimeConfig {
    drift: Vec<f64>,
    #[serde(default)]
    sigmas: Vec<Vec<f64>>,
    jump_tail: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearizedExperiment {
    p: f64,
    alpha: f64,
    weights: Vec<f64>,
    radius: f64,
    regimes: Vec<LinearizedRegimeConfig>,
    #[serde(default = "default_budget")]
    tail_budget: usize,
}

pub fn linearized_check(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let exp: LinearizedExperiment = cfg.experiment()?;
    let regimes: Vec<LinearizedRegime> = exp
        .regimes
        .iter()
        .enumerate()
        .map(|(i, r)| -> Result<LinearizedRegime, CliError> {
            let jump_tail = match r.jump_tail {
                Some(c) => c,
                None => {
                    jump_tail_constant(
                        &model,
                        i,
                        exp.p,
                        exp.radius,
                        exp.tail_budget,
                        8,
                        seed.unwrap_or(0),
                    )?
                    .0
                }
            };
            Ok(LinearizedRegime {
                drift: r.drift.clone(),
                sigmas: r.sigmas.clone(),
                jump_tail,
            })
        })
        .collect::<Result<_, _>>()?;
    let spec = LinearizedSpec {
        dim: model.dim(),
        regimes,
        p: exp.p,
        weights: exp.weights.clone(),
        alpha: exp.alpha,
        radius: exp.radius,
    };
    // two-radius consistency: the sign of the verdict must agree at r and 2r
    let probes_r: Vec<Vec<f64>> = vec![vec![exp.radius; model.dim()], {
        let mut v = vec![0.0; model.dim()];
        v[0] = -exp.radius;
        v
    }];
    let probes_2r: Vec<Vec<f64>> = probes_r
        .iter()
        .map(|p| p.iter().map(|v| 2.0 * v).collect())
        .collect();
    let rep1 = check_linearized(&spec, &model, &probes_r)?;
    let rep2 = check_linearized(&spec, &model, &probes_2r)?;
    let consistent = rep1.pass == rep2.pass;
    let text = format!(
        "p: {}\nalpha: {}\nregimes checked: {}\nworst margin at r: {} (regime {}, x {:?})\nworst margin at 2r: {}\nconsistent across radii: {}\nstatus: {}\n",
        exp.p,
        exp.alpha,
        rep1.regimes_checked,
        rep1.worst_margin,
        rep1.worst_regime,
        rep1.worst_point,
        rep2.worst_margin,
        consistent,
        if rep1.pass && consistent { "PASS" } else { "FAIL" }
    );
    out.write_text("linearized.txt", &text)?;
    println!("{text}");
    Ok(rep1.pass && consistent)
}

// ---------------------------------------------------------------------
// ergodicity
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ErgodicityExperiment {
    checkpoints: Vec<f64>,
    n: usize,
    #[serde(default = "default_bins")]
    bins: usize,
    #[serde(default = "default_box")]
    box_halfwidth: f64,
    #[serde(default = "default_regime_bin")]
    max_regime_bin: usize,
    #[serde(default = "default_ref_t")]
    reference_t: f64,
    #[serde(default = "default_ref_burn")]
    reference_burn: f64,
    #[serde(default = "default_ref_thin")]
    reference_thin: f64,
    /// Leading checkpoints used in the decay fit.
    fit_prefix: Option<usize>,
    /// Additional initial conditions beyond run.x0/run.k0.
    #[serde(default)]
    extra_inits: Vec<InitPoint>,
    /// Allow running without a drift certificate.
    #[serde(default)]
    allow_uncertified: bool,
    /// Optional certificate inputs checked before the run.
    certificate: Option<CertificateInputs>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitPoint {
    x0: Vec<f64>,
    k0: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateInputs {
    function: FunctionSpec,
    alpha: f64,
    gamma: f64,
    radius: f64,
    max_regime: usize,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn default_bins() -> usize {
    40
}

fn default_box() -> f64 {
    4.0
}

fn default_regime_bin() -> usize {
    8
}

fn default_ref_t() -> f64 {
    2_000.0
}

fn default_ref_burn() -> f64 {
    20.0
}

fn default_ref_thin() -> f64 {
    0.25
}

pub fn ergodicity(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let run = cfg.run()?;
    let sim = run.sim_config(seed)?;
    let (x0, k0) = run.initial(model.dim())?;
    let exp: ErgodicityExperiment = cfg.experiment()?;

    // certificate gate (or explicit override, flagged in the report)
    let cert_line;
    if let Some(ci) = &exp.certificate {
        let f = ci.function.build()?;
        let sampler = RegionSampler {
            radius: ci.radius,
            max_regime: ci.max_regime,
        };
        let cert = check_drift(
            &model, &f, &sampler, ci.alpha, ci.gamma, 1e-6, ci.budget, sim.seed,
        )?;
        cert_line = format!("certificate: {}\n", cert.summary());
        if !cert.passed() && !exp.allow_uncertified {
            out.write_text("ergodicity.txt", &cert_line)?;
            println!("{cert_line}");
            return Ok(false);
        }
    } else if !exp.allow_uncertified {
        return Err(CliError::Config(
            "experiment: provide certificate inputs or set allow_uncertified = true".into(),
        ));
    } else {
        cert_line = "certificate: SKIPPED (allow_uncertified)\n".to_string();
    }

    let mut inits = vec![(x0, k0)];
    for ip in &exp.extra_inits {
        inits.push((ip.x0.clone(), ip.k0));
    }
    let opts = ConvergenceOptions {
        bins: exp.bins,
        box_halfwidth: exp.box_halfwidth,
        max_regime_bin: exp.max_regime_bin,
        reference_t: exp.reference_t,
        reference_burn: exp.reference_burn,
        reference_thin: exp.reference_thin,
        fit_prefix: exp.fit_prefix,
    };
    let report = empirical_convergence(&model, &inits, &exp.checkpoints, exp.n, &opts, &sim)?;

    let mut w = out.csv_writer("ergodicity.csv")?;
    w.write_record(["init", "t", "binned_tv"]).map_err(csv_err)?;
    for (which, dist) in report.distances.iter().enumerate() {
        for (t, d) in report.checkpoints.iter().zip(dist) {
            w.write_record([format!("{which}"), format!("{t}"), format!("{d}")])
                .map_err(csv_err)?;
        }
    }
    w.flush()
        .map_err(|e| CliError::Io(format!("ergodicity.csv: {e}")))?;

    let pass = report.fitted_rate < 0.0 && report.fit_r2 >= 0.9;
    let text = format!(
        "{cert_line}fitted decay rate: {} (R² {:.4})\nundersampled reference bins: {}\ncross distances at final checkpoint: {:?}\nproxy: binned total variation over {} bins, box ±{}, regimes ≤ {}\nstatus: {}\n",
        report.fitted_rate,
        report.fit_r2,
        report.undersampled_bins,
        report.cross_distances_final,
        exp.bins,
        exp.box_halfwidth,
        exp.max_regime_bin,
        if pass { "PASS" } else { "FAIL" }
    );
    out.write_text("ergodicity.txt", &text)?;
    println!("{text}");
    Ok(pass)
}

// ---------------------------------------------------------------------
// ou-example
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OuExampleExperiment {
    k1: f64,
    k2: f64,
    /// Jump constant J = ∫ z² ν(dz); computed from the model's jump
    /// measure when absent.
    jump_constant: Option<f64>,
    #[serde(default = "default_probes")]
    probes: Vec<f64>,
    #[serde(default = "default_max_regime")]
    max_regime: usize,
}

fn default_probes() -> Vec<f64> {
    vec![-25.0, -5.0, -1.0, 0.0, 0.5, 2.0, 10.0, 50.0]
}

fn default_max_regime() -> usize {
    40
}

pub fn ou_example(
    cfg: &FileConfig,
    seed: Option<u64>,
    out: &mut OutputDir,
) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let model_cfg = cfg.model()?;
    let exp: OuExampleExperiment = cfg.experiment()?;
    let params = OuExampleParams {
        alpha: model_cfg
            .params
            .alpha
            .clone()
            .ok_or_else(|| CliError::Config("model.params.alpha: required".into()))?,
        sigma: model_cfg
            .params
            .sigma
            .clone()
            .ok_or_else(|| CliError::Config("model.params.sigma: required".into()))?,
        beta: model_cfg
            .params
            .beta
            .clone()
            .unwrap_or(RegimeSeq::Const { value: 0.0 }),
        up: model_cfg
            .rates
            .up
            .clone()
            .unwrap_or(RateFnSpec::Const { value: 0.0 }),
        down: model_cfg
            .rates
            .down
            .clone()
            .unwrap_or(RateFnSpec::Const { value: 0.0 }),
    };
    // J as a computed input: second moment of the normalized mark law
    // times the total mass, by the model's own quadrature
    let jump_constant = match exp.jump_constant {
        Some(j) => j,
        None => {
            let mut rng = StreamFactory::new(seed.unwrap_or(0)).stream(0, StreamKind::Marks);
            model.jump().integrate(&|u| u[0] * u[0], 65_536, &mut rng).0
        }
    };
    let report = ou_example_conditions(
        &params,
        exp.k1,
        exp.k2,
        jump_constant,
        &exp.probes,
        exp.max_regime,
    );
    let line = |name: &str, o: &rsjd_core::ergodicity::ConditionOutcome| match &o.witness {
        None => format!("({name}) PASS\n"),
        Some((k, x, lhs, rhs)) => {
            format!("({name}) FAIL at k = {k}, x = {x}: lhs {lhs} > rhs {rhs}\n")
        }
    };
    let text = format!(
        "jump constant J: {jump_constant}\nK1: {}\nK2: {}\n{}{}{}overall: {}\n",
        report.k1,
        report.k2,
        line("a", &report.a),
        line("b", &report.b),
        line("c", &report.c),
        if report.all_pass() { "PASS" } else { "FAIL" }
    );
    out.write_text("ou_example.txt", &text)?;
    println!("{text}");
    Ok(report.all_pass())
}

// ---------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateExperiment {
    #[serde(default = "default_validate_probes")]
    probes: usize,
    #[serde(default = "default_validate_radius")]
    radius: f64,
    #[serde(default = "default_max_regime_small")]
    max_regime: usize,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
}

fn default_validate_probes() -> usize {
    200
}

fn default_validate_radius() -> f64 {
    10.0
}

fn default_max_regime_small() -> usize {
    8
}

pub fn validate(cfg: &FileConfig, out: &mut OutputDir) -> Result<bool, CliError> {
    let model = build_model(cfg)?;
    let exp: ValidateExperiment = cfg.experiment()?;
    let probes = probe_cloud(model.dim(), exp.radius, exp.max_regime, exp.probes);
    let report = validate_assumptions(&model, &probes, exp.tolerance);
    let mut text = format!(
        "probes: {} (pairs {})\n",
        report.probes_used, report.pairs_used
    );
    for check in &report.checks {
        let status = match check.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Unknown => "unknown",
        };
        text.push_str(&format!(
            "{}: {status} (worst ratio {})\n",
            check.name, check.worst_ratio
        ));
        if let Some(w) = &check.witness {
            text.push_str(&format!(
                "  witness: x {:?} y {:?} k {} lhs {} rhs {}\n",
                w.x, w.y, w.regime, w.lhs, w.rhs
            ));
        }
    }
    text.push_str(&format!(
        "overall: {}\n",
        if report.all_pass() { "PASS" } else { "FAIL" }
    ));
    out.write_text("assumptions.txt", &text)?;
    println!("{text}");
    Ok(report.all_pass())
}

// ---------------------------------------------------------------------
// list-models
// ---------------------------------------------------------------------

pub fn list_models(filter: &str) -> Result<bool, CliError> {
    for (name, description, schema) in families::list_models() {
        if !filter.is_empty() && !name.contains(filter) {
            continue;
        }
        println!("{name}\n  {description}\n  {schema}");
    }
    println!(
        "test functions: {}",
        rsjd_core::generator::test_functions::registered_names().join(", ")
    );
    Ok(true)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(format!("csv: {e}"))
}
