//! The regime-frozen segment integrator and the interlacing loop.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ClockScheme, HybridPath, JumpEvent, Recorder, SimConfig, SwitchEvent, Termination};
use crate::error::{Error, Result};
use crate::model::{norm, ModelSpec};
use crate::rng::{PathStreams, StreamFactory};

/// Standard exponential variate with the given rate.
#[inline]
fn exp_draw(rng: &mut ChaCha12Rng, rate: f64) -> f64 {
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    -u.ln() / rate
}

/// How a regime segment ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentEnd {
    /// Reached the requested end time without switching.
    Horizon,
    /// The switching clock fired at the given absolute time.
    Switched { at: f64 },
    /// Guard violation or non-finite state.
    Exploded { at: f64 },
}

/// Scratch state for one regime-frozen segment.
struct Workspace {
    drift: Vec<f64>,
    sigma: Vec<f64>,
    noise: Vec<f64>,
    disp: Vec<f64>,
    comp: Vec<f64>,
}

impl Workspace {
    fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            sigma: vec![0.0; d * d],
            noise: vec![0.0; d],
            disp: vec![0.0; d],
            comp: vec![0.0; d],
        }
    }
}

/// Integrate the regime-`k` SDE from `(t0, x0)` until `t_hi`, a switching
/// event or the guard. Nodes (lattice, jump epochs, the switching epoch)
/// are appended through `rec`; `x` is left at the final state.
#[allow(clippy::too_many_arguments)]
fn run_segment<R: Recorder>(
    model: &ModelSpec,
    rec: &mut R,
    x: &mut Vec<f64>,
    k: usize,
    t0: f64,
    t_hi: f64,
    xi: f64,
    cfg: &SimConfig,
    streams: &mut PathStreams,
) -> Result<SegmentEnd> {
    let d = model.dim();
    let mut ws = Workspace::new(d);
    let mass = model.jump().total_mass();
    let compensated = model.jump().is_compensated() && mass > 0.0;

    // majorant-based proposals for the thinning scheme
    let majorant = match cfg.clock {
        ClockScheme::GridIntegrated => None,
        ClockScheme::Thinning => {
            let h = model.rates().bound().ok_or_else(|| {
                Error::Unsupported(
                    "thinning clock requires a declared rate bound on the model".into(),
                )
            })?;
            Some(h * (k as f64 + 1.0))
        }
    };

    let mut t = t0;
    let mut clock = 0.0;
    let mut q_right = model.q_total(x, k)?;
    let mut next_jump = if mass > 0.0 {
        t0 + exp_draw(&mut streams.jump_times, mass)
    } else {
        f64::INFINITY
    };
    let mut next_prop = match majorant {
        Some(m) if m > 0.0 => t0 + exp_draw(&mut streams.switch_clock, m),
        _ => f64::INFINITY,
    };
    let mut lattice_idx: u64 = 1;

    loop {
        let next_lattice = t0 + lattice_idx as f64 * cfg.dt;
        let t_next = next_lattice.min(next_jump).min(next_prop).min(t_hi);
        let h = t_next - t;
        debug_assert!(h >= 0.0);

        // one Euler–Maruyama increment over (t, t_next]
        model.drift_into(x, k, &mut ws.drift);
        if compensated {
            let mut rng_q = streams.marks.clone();
            for i in 0..d {
                let (ci, _) = model.jump().integrate(
                    &|u| model.jump_disp(x, k, u)[i],
                    2_048,
                    &mut rng_q,
                );
                ws.comp[i] = ci;
            }
        }
        model.diffusion_into(x, k, &mut ws.sigma);
        for z in ws.noise.iter_mut() {
            *z = StandardNormal.sample(&mut streams.brownian);
        }
        let sqrt_h = h.sqrt();
        let mut x_new = x.clone();
        for i in 0..d {
            let mut dx = ws.drift[i] * h;
            if compensated {
                dx -= ws.comp[i] * h;
            }
            let mut diff = 0.0;
            for j in 0..d {
                diff += ws.sigma[i * d + j] * ws.noise[j];
            }
            x_new[i] += dx + diff * sqrt_h;
        }

        // integrated-clock crossing check (grid scheme)
        if majorant.is_none() {
            let q_left_new = model.q_total(&x_new, k)?;
            let inc = 0.5 * (q_right + q_left_new) * h;
            if clock + inc > xi && inc > 0.0 {
                // linear interpolation of the clock inside the step
                let frac = ((xi - clock) / inc).clamp(0.0, 1.0);
                let h_star = frac * h;
                let sqrt_star = h_star.sqrt();
                let t_star = t + h_star;
                for i in 0..d {
                    let mut dx = ws.drift[i] * h_star;
                    if compensated {
                        dx -= ws.comp[i] * h_star;
                    }
                    let mut diff = 0.0;
                    for j in 0..d {
                        diff += ws.sigma[i * d + j] * ws.noise[j];
                    }
                    x[i] += dx + diff * sqrt_star;
                }
                rec.node(t_star, x, k);
                if !state_ok(x, cfg) {
                    return Ok(SegmentEnd::Exploded { at: t_star });
                }
                return Ok(SegmentEnd::Switched { at: t_star });
            }
            clock += inc;
            q_right = q_left_new;
        }

        *x = x_new;
        let mut jumped = false;
        if t_next == next_jump && t_next < t_hi {
            // apply the Poisson jump at its exact epoch
            let mark = model.jump().sample_mark(&mut streams.marks);
            model.jump_disp_into(x, k, &mark, &mut ws.disp);
            for i in 0..d {
                x[i] += ws.disp[i];
            }
            rec.jump(&JumpEvent {
                time: t_next,
                mark,
                displacement: ws.disp.clone(),
            });
            next_jump = t_next + exp_draw(&mut streams.jump_times, mass);
            q_right = model.q_total(x, k)?;
            jumped = true;
        }
        let _ = jumped;

        rec.node(t_next, x, k);
        if !state_ok(x, cfg) {
            return Ok(SegmentEnd::Exploded { at: t_next });
        }

        // thinning proposal: accept with probability q_k(X)/majorant
        if let Some(m) = majorant {
            if t_next == next_prop && t_next < t_hi {
                let q_here = model.q_total(x, k)?;
                if q_here > m * (1.0 + 1e-9) {
                    return Err(Error::Unsupported(format!(
                        "thinning majorant {m} violated by q_k(x) = {q_here} at t = {t_next}"
                    )));
                }
                let u: f64 = streams.switch_clock.random();
                if u * m < q_here {
                    return Ok(SegmentEnd::Switched { at: t_next });
                }
                next_prop = t_next + exp_draw(&mut streams.switch_clock, m);
            }
        }

        if t_next >= next_lattice {
            lattice_idx += 1;
        }
        t = t_next;
        if t >= t_hi {
            return Ok(SegmentEnd::Horizon);
        }
    }
}

fn state_ok(x: &[f64], cfg: &SimConfig) -> bool {
    x.iter().all(|v| v.is_finite()) && norm(x) <= cfg.guard_radius
}

/// Integrate the regime-`k` SDE from `(t0, x)` to `t_hi` with no
/// switching clock at all (the auxiliary-process segments, whose regime
/// changes are dictated externally). Returns the explosion time if the
/// guard fired.
#[allow(clippy::too_many_arguments)]
pub fn run_frozen_segment<R: Recorder>(
    model: &ModelSpec,
    rec: &mut R,
    x: &mut Vec<f64>,
    k: usize,
    t0: f64,
    t_hi: f64,
    cfg: &SimConfig,
    streams: &mut PathStreams,
) -> Result<Option<f64>> {
    if t_hi <= t0 {
        return Ok(None);
    }
    let mut frozen_cfg = cfg.clone();
    frozen_cfg.clock = ClockScheme::GridIntegrated;
    match run_segment(
        model,
        rec,
        x,
        k,
        t0,
        t_hi,
        f64::INFINITY,
        &frozen_cfg,
        streams,
    )? {
        SegmentEnd::Horizon => Ok(None),
        SegmentEnd::Exploded { at } => Ok(Some(at)),
        SegmentEnd::Switched { .. } => unreachable!("infinite clock cannot fire"),
    }
}

/// Draw the post-switch regime at `(x, k)`: target `l ≠ k` with
/// probability `q_kl(x)/q_k(x)`, or `k` itself when `q_k(x) = 0`. The
/// draw routes through the interval partition, i.e. through the
/// displacement function on `[0, q_k(x))`.
pub fn sample_switch_target(
    model: &ModelSpec,
    x: &[f64],
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Result<usize> {
    let partition = model.partition(x, k)?;
    let total = partition.total_length();
    if total <= 0.0 {
        return Ok(k);
    }
    let r = rng.random::<f64>() * total;
    let disp = partition.displacement(r);
    Ok((k as i64 + disp) as usize)
}

/// Simulate one regime-frozen segment from `x0` in regime `k` with the
/// supplied exponential variate `xi`, up to `cfg.t_end`. Returns the
/// recorded segment and the switching epoch, if the clock fired.
pub fn simulate_regime_segment(
    model: &ModelSpec,
    x0: &[f64],
    k: usize,
    xi: f64,
    cfg: &SimConfig,
    streams: &mut PathStreams,
) -> Result<(HybridPath, Option<f64>)> {
    cfg.validate(x0, k)?;
    if !(xi > 0.0) {
        return Err(Error::InvalidConfig("segment variate xi must be positive".into()));
    }
    let mut path = HybridPath::new(model.dim());
    let mut x = x0.to_vec();
    path.node(0.0, &x, k);
    let end = run_segment(model, &mut path, &mut x, k, 0.0, cfg.t_end, xi, cfg, streams)?;
    match end {
        SegmentEnd::Horizon => Ok((path, None)),
        SegmentEnd::Switched { at } => Ok((path, Some(at))),
        SegmentEnd::Exploded { at } => {
            path.status = Termination::Exploded { at };
            Ok((path, None))
        }
    }
}

/// Simulate `(X, Λ)` from `(x0, k0)` by interlacing regime segments:
/// a fresh independent exponential clock per segment and a switch target
/// drawn at each epoch. Runs through `rec`; returns the termination
/// status and the terminal `(x, k, t)`.
pub fn simulate_hybrid_with<R: Recorder>(
    model: &ModelSpec,
    rec: &mut R,
    x0: &[f64],
    k0: usize,
    cfg: &SimConfig,
    streams: &mut PathStreams,
) -> Result<(Termination, Vec<f64>, usize, f64)> {
    let mut x = x0.to_vec();
    let mut k = k0;
    let mut t = 0.0;
    rec.node(t, &x, k);
    loop {
        let xi = exp_draw(&mut streams.switch_clock, 1.0);
        let end = run_segment(model, rec, &mut x, k, t, cfg.t_end, xi, cfg, streams)?;
        match end {
            SegmentEnd::Horizon => return Ok((Termination::Completed, x, k, cfg.t_end)),
            SegmentEnd::Exploded { at } => return Ok((Termination::Exploded { at }, x, k, at)),
            SegmentEnd::Switched { at } => {
                let target = sample_switch_target(model, &x, k, &mut streams.switch_target)?;
                if target != k {
                    rec.switch(&SwitchEvent {
                        time: at,
                        from: k,
                        to: target,
                    });
                    rec.relabel_last_regime(target);
                    k = target;
                    if k >= cfg.regime_ceiling {
                        return Ok((Termination::CeilingHit { at }, x, k, at));
                    }
                }
                t = at;
            }
        }
    }
}

/// Simulate one full hybrid path, recording every node.
pub fn simulate_hybrid(
    model: &ModelSpec,
    x0: &[f64],
    k0: usize,
    cfg: &SimConfig,
    path_index: u64,
) -> Result<HybridPath> {
    cfg.validate(x0, k0)?;
    let factory = StreamFactory::new(cfg.seed);
    let mut streams = PathStreams::for_path(&factory, path_index);
    let mut path = HybridPath::new(model.dim());
    let (status, ..) = simulate_hybrid_with(model, &mut path, x0, k0, cfg, &mut streams)?;
    path.status = status;
    Ok(path)
}
