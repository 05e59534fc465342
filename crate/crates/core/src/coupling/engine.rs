//! Stepping engine for the coupled process `(X̃, Λ̃, Z̃, Ξ̃)`.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use super::coupled_switch_rates;
use crate::error::Result;
use crate::model::{norm, ModelSpec};
use crate::rng::{StreamFactory, StreamKind};
use crate::simulate::{sample_switch_target, SimConfig, Termination};

/// Joint trajectory with the decoupling time.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    dim: usize,
    pub times: Vec<f64>,
    xs: Vec<f64>,
    zs: Vec<f64>,
    pub first_regimes: Vec<usize>,
    pub second_regimes: Vec<usize>,
    /// First time the regime components differ, if it happened.
    pub zeta: Option<f64>,
    pub status: Termination,
}

impl CoupledPath {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            xs: Vec::new(),
            zs: Vec::new(),
            first_regimes: Vec::new(),
            second_regimes: Vec::new(),
            zeta: None,
            status: Termination::Completed,
        }
    }

    fn push(&mut self, t: f64, x: &[f64], z: &[f64], i: usize, j: usize) {
        self.times.push(t);
        self.xs.extend_from_slice(x);
        self.zs.extend_from_slice(z);
        self.first_regimes.push(i);
        self.second_regimes.push(j);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first_state(&self, idx: usize) -> &[f64] {
        &self.xs[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn second_state(&self, idx: usize) -> &[f64] {
        &self.zs[idx * self.dim..(idx + 1) * self.dim]
    }

    fn index_at(&self, t: f64) -> usize {
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// `|X̃(t∧ζ) − Z̃(t∧ζ)|`.
    pub fn distance_at_capped(&self, t: f64) -> f64 {
        let t_eff = match self.zeta {
            Some(z) => t.min(z),
            None => t,
        };
        let i = self.index_at(t_eff);
        let x = self.first_state(i);
        let z = self.second_state(i);
        norm(&x.iter().zip(z).map(|(a, b)| a - b).collect::<Vec<_>>())
    }

    /// Regimes agree strictly before ζ — asserted on every recorded node.
    pub fn pre_zeta_regimes_agree(&self) -> bool {
        let zeta = self.zeta.unwrap_or(f64::INFINITY);
        self.times
            .iter()
            .zip(self.first_regimes.iter().zip(&self.second_regimes))
            .all(|(&t, (&i, &j))| t >= zeta || i == j)
    }
}

enum SwitchMode {
    /// Basic coupling: one clock over the three families.
    Coupled { xi: f64, clock: f64, rate: f64 },
    /// Post-ζ: independent clocks per marginal.
    Independent {
        xi1: f64,
        clock1: f64,
        rate1: f64,
        xi2: f64,
        clock2: f64,
        rate2: f64,
    },
}

#[inline]
fn exp1(rng: &mut ChaCha12Rng) -> f64 {
    -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()
}

/// Simulate the coupled pair from `(x0, k0)` and `(z0, k0)` to
/// `cfg.t_end`, sharing Brownian increments and jump marks.
pub fn simulate_coupled(
    model: &ModelSpec,
    x0: &[f64],
    z0: &[f64],
    k0: usize,
    cfg: &SimConfig,
    replica: u64,
) -> Result<CoupledPath> {
    cfg.validate(x0, k0)?;
    let d = model.dim();
    let factory = StreamFactory::new(cfg.seed);
    let mut rng_brownian = factory.stream(replica, StreamKind::Brownian);
    let mut rng_jump_times = factory.stream(replica, StreamKind::JumpTimes);
    let mut rng_marks = factory.stream(replica, StreamKind::Marks);
    let mut rng_clock = factory.stream(replica, StreamKind::SwitchClock);
    let mut rng_target = factory.stream(replica, StreamKind::SwitchTarget);
    let mut rng_clock2 = factory.stream(replica, StreamKind::SwitchClockAlt);
    let mut rng_target2 = factory.stream(replica, StreamKind::SwitchTargetAlt);

    let mass = model.jump().total_mass();
    let mut path = CoupledPath::new(d);
    let mut x = x0.to_vec();
    let mut z = z0.to_vec();
    let mut i = k0;
    let mut j = k0;
    let mut t = 0.0;
    path.push(t, &x, &z, i, j);

    let mut mode = SwitchMode::Coupled {
        xi: exp1(&mut rng_clock),
        clock: 0.0,
        rate: coupled_switch_rates(model, &x, i, &z, j)?.total(),
    };
    let mut next_jump = if mass > 0.0 {
        exp1(&mut rng_jump_times) / mass
    } else {
        f64::INFINITY
    };
    let mut lattice_idx: u64 = 1;

    let mut drift_x = vec![0.0; d];
    let mut drift_z = vec![0.0; d];
    let mut sigma_x = vec![0.0; d * d];
    let mut sigma_z = vec![0.0; d * d];
    let mut noise = vec![0.0; d];

    'outer: loop {
        let next_lattice = lattice_idx as f64 * cfg.dt;
        let t_next = next_lattice.min(next_jump).min(cfg.t_end);
        let h = t_next - t;

        model.drift_into(&x, i, &mut drift_x);
        model.drift_into(&z, j, &mut drift_z);
        model.diffusion_into(&x, i, &mut sigma_x);
        model.diffusion_into(&z, j, &mut sigma_z);
        for n in noise.iter_mut() {
            *n = StandardNormal.sample(&mut rng_brownian);
        }
        let advance = |x0: &[f64], drift: &[f64], sigma: &[f64], s: f64| -> Vec<f64> {
            let sq = s.sqrt();
            (0..d)
                .map(|a| {
                    let mut diff = 0.0;
                    for b in 0..d {
                        diff += sigma[a * d + b] * noise[b];
                    }
                    x0[a] + drift[a] * s + diff * sq
                })
                .collect()
        };
        let x_new = advance(&x, &drift_x, &sigma_x, h);
        let z_new = advance(&z, &drift_z, &sigma_z, h);

        // clock increments over (t, t_next] and earliest crossing
        let mut crossing: Option<(f64, u8)> = None; // (fraction, which clock)
        match &mut mode {
            SwitchMode::Coupled { xi, clock, rate } => {
                let rate_new = coupled_switch_rates(model, &x_new, i, &z_new, j)?.total();
                let inc = 0.5 * (*rate + rate_new) * h;
                if *clock + inc > *xi && inc > 0.0 {
                    crossing = Some((((*xi - *clock) / inc).clamp(0.0, 1.0), 0));
                } else {
                    *clock += inc;
                    *rate = rate_new;
                }
            }
            SwitchMode::Independent {
                xi1,
                clock1,
                rate1,
                xi2,
                clock2,
                rate2,
            } => {
                let r1_new = model.q_total(&x_new, i)?;
                let r2_new = model.q_total(&z_new, j)?;
                let inc1 = 0.5 * (*rate1 + r1_new) * h;
                let inc2 = 0.5 * (*rate2 + r2_new) * h;
                let f1 = if *clock1 + inc1 > *xi1 && inc1 > 0.0 {
                    Some(((*xi1 - *clock1) / inc1).clamp(0.0, 1.0))
                } else {
                    None
                };
                let f2 = if *clock2 + inc2 > *xi2 && inc2 > 0.0 {
                    Some(((*xi2 - *clock2) / inc2).clamp(0.0, 1.0))
                } else {
                    None
                };
                match (f1, f2) {
                    (Some(a), Some(b)) if a <= b => crossing = Some((a, 1)),
                    (Some(_), Some(b)) => crossing = Some((b, 2)),
                    (Some(a), None) => crossing = Some((a, 1)),
                    (None, Some(b)) => crossing = Some((b, 2)),
                    (None, None) => {}
                }
                if let Some((frac, which)) = crossing {
                    // the clock that did not fire still accumulates up to t*
                    if which == 1 {
                        *clock2 += inc2 * frac;
                        *rate2 = *rate2 + (r2_new - *rate2) * frac;
                    } else {
                        *clock1 += inc1 * frac;
                        *rate1 = *rate1 + (r1_new - *rate1) * frac;
                    }
                } else {
                    *clock1 += inc1;
                    *rate1 = r1_new;
                    *clock2 += inc2;
                    *rate2 = r2_new;
                }
            }
        }

        if let Some((frac, which)) = crossing {
            let h_star = frac * h;
            let t_star = t + h_star;
            x = advance(&x, &drift_x, &sigma_x, h_star);
            z = advance(&z, &drift_z, &sigma_z, h_star);

            match which {
                0 => {
                    // basic-coupling event: pick family and target
                    let rates = coupled_switch_rates(model, &x, i, &z, j)?;
                    let total = rates.total();
                    if total > 0.0 {
                        let mut r = rng_target.random::<f64>() * total;
                        let mut applied = false;
                        for (l, q) in &rates.excess_first {
                            if r < *q {
                                i = *l;
                                applied = true;
                                break;
                            }
                            r -= q;
                        }
                        if !applied {
                            for (l, q) in &rates.excess_second {
                                if r < *q {
                                    j = *l;
                                    applied = true;
                                    break;
                                }
                                r -= q;
                            }
                        }
                        if !applied {
                            for (l, q) in &rates.joint {
                                if r < *q {
                                    i = *l;
                                    j = *l;
                                    applied = true;
                                    break;
                                }
                                r -= q;
                            }
                        }
                        if !applied {
                            // r landed at the far edge; take the last family entry
                            if let Some((l, _)) = rates.joint.last() {
                                i = *l;
                                j = *l;
                            }
                        }
                    }
                    if i != j && path.zeta.is_none() {
                        path.zeta = Some(t_star);
                        mode = SwitchMode::Independent {
                            xi1: exp1(&mut rng_clock),
                            clock1: 0.0,
                            rate1: model.q_total(&x, i)?,
                            xi2: exp1(&mut rng_clock2),
                            clock2: 0.0,
                            rate2: model.q_total(&z, j)?,
                        };
                    } else {
                        mode = SwitchMode::Coupled {
                            xi: exp1(&mut rng_clock),
                            clock: 0.0,
                            rate: coupled_switch_rates(model, &x, i, &z, j)?.total(),
                        };
                    }
                }
                1 => {
                    i = sample_switch_target(model, &x, i, &mut rng_target)?;
                    if let SwitchMode::Independent { xi1, clock1, rate1, .. } = &mut mode {
                        *xi1 = exp1(&mut rng_clock);
                        *clock1 = 0.0;
                        *rate1 = model.q_total(&x, i)?;
                    }
                }
                _ => {
                    j = sample_switch_target(model, &z, j, &mut rng_target2)?;
                    if let SwitchMode::Independent { xi2, clock2, rate2, .. } = &mut mode {
                        *xi2 = exp1(&mut rng_clock2);
                        *clock2 = 0.0;
                        *rate2 = model.q_total(&z, j)?;
                    }
                }
            }

            path.push(t_star, &x, &z, i, j);
            if i >= cfg.regime_ceiling || j >= cfg.regime_ceiling {
                path.status = Termination::CeilingHit { at: t_star };
                break 'outer;
            }
            if !(state_ok(&x, cfg) && state_ok(&z, cfg)) {
                path.status = Termination::Exploded { at: t_star };
                break 'outer;
            }
            t = t_star;
            continue;
        }

        x = x_new;
        z = z_new;
        if t_next == next_jump && t_next < cfg.t_end {
            let mark = model.jump().sample_mark(&mut rng_marks);
            let cx = model.jump_disp(&x, i, &mark);
            let cz = model.jump_disp(&z, j, &mark);
            for a in 0..d {
                x[a] += cx[a];
                z[a] += cz[a];
            }
            next_jump = t_next + exp1(&mut rng_jump_times) / mass;
            // refresh clock endpoint rates after the jump
            match &mut mode {
                SwitchMode::Coupled { rate, .. } => {
                    *rate = coupled_switch_rates(model, &x, i, &z, j)?.total();
                }
                SwitchMode::Independent { rate1, rate2, .. } => {
                    *rate1 = model.q_total(&x, i)?;
                    *rate2 = model.q_total(&z, j)?;
                }
            }
        }
        path.push(t_next, &x, &z, i, j);
        if !(state_ok(&x, cfg) && state_ok(&z, cfg)) {
            path.status = Termination::Exploded { at: t_next };
            break 'outer;
        }
        if t_next >= next_lattice {
            lattice_idx += 1;
        }
        t = t_next;
        if t >= cfg.t_end {
            break 'outer;
        }
    }
    Ok(path)
}

fn state_ok(x: &[f64], cfg: &SimConfig) -> bool {
    x.iter().all(|v| v.is_finite()) && norm(x) <= cfg.guard_radius
}
