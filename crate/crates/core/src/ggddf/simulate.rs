//! Closed-loop integration of the GGDDF policies.
//!
//! With piecewise-constant demand the policy output is constant between
//! events, so the exact flow is piecewise linear. Events are demand
//! breakpoints, availability endpoints, group merges and zero crossings; the
//! last two are found in closed form from the current depletion rates.

use super::policy::{group_fractions, RateVector};
use super::trajectory::{Trajectory, ZeroCrossing};
use crate::error::{Error, Result};
use crate::model::{check_dim, group_partition, DemandProfile, Fleet, StateVector, GROUP_TOL};

/// States within this distance of zero are treated as exactly empty.
const ZERO_TOL: f64 = 1e-12;
/// Events closer than this to a fixed boundary are snapped onto it.
const TIME_EPS: f64 = 1e-12;

struct SimGroup {
    value: f64,
    members: Vec<usize>,
}

fn validate(fleet: &Fleet, x0: &StateVector, demand: &DemandProfile) -> Result<()> {
    check_dim(fleet.len(), x0.len())?;
    if let Some(v) = x0.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidFleet(format!("initial state entry {v} is not finite")));
    }
    let (dh, fh) = (demand.horizon_end(), fleet.horizon_end());
    if (dh - fh).abs() > 1e-9 * fh.max(1.0) {
        return Err(Error::HorizonMismatch(format!(
            "demand ends at {dh}, fleet horizon ends at {fh}"
        )));
    }
    Ok(())
}

/// Times at which demand or (when aware) availability may change.
fn static_times(fleet: &Fleet, demand: &DemandProfile, availability_aware: bool) -> Vec<f64> {
    let end = fleet.horizon_end();
    let mut times: Vec<f64> = demand.breakpoints().to_vec();
    if availability_aware {
        for d in fleet.devices() {
            times.extend(d.availability.endpoints());
        }
    }
    times.retain(|&t| t > 0.0 && t < end);
    times.push(0.0);
    times.push(end);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|b, a| *b - *a <= TIME_EPS);
    *times.last_mut().unwrap() = end;
    times
}

/// Event-driven simulation of the availability-aware (`K`) or plain (`K̃`)
/// closed loop from `x0`.
///
/// Without `allow_negative` the run halts as soon as the policy would draw
/// from an empty device and records the halt time in `stopped_at`. With it,
/// integration continues and every device's first descent below zero is
/// recorded in `zero_crossings`.
pub fn simulate(
    fleet: &Fleet,
    x0: &StateVector,
    demand: &DemandProfile,
    availability_aware: bool,
    allow_negative: bool,
) -> Result<Trajectory> {
    validate(fleet, x0, demand)?;
    let devices = fleet.devices();
    let n = devices.len();
    let statics = static_times(fleet, demand, availability_aware);
    let endpoint_count: usize = fleet.devices().iter().map(|d| 2 * d.availability.intervals().len()).sum();
    let limit = 10 * (n + demand.breakpoints().len() + endpoint_count);

    let mut groups: Vec<SimGroup> = group_partition(x0, GROUP_TOL)
        .into_iter()
        .map(|g| SimGroup {
            value: g.tau,
            members: g.members,
        })
        .collect();

    let mut traj = Trajectory {
        event_times: vec![0.0],
        states: vec![x0.clone()],
        rates: Vec::new(),
        demand: Vec::new(),
        shortfall: Vec::new(),
        availability_aware,
        allow_negative,
        stopped_at: None,
        zero_crossings: Vec::new(),
    };
    let mut crossed = vec![false; n];
    for (i, &v) in x0.iter().enumerate() {
        if v < -ZERO_TOL {
            crossed[i] = true;
            traj.zero_crossings.push(ZeroCrossing { device: i, time: 0.0 });
        }
    }

    let mut available = vec![true; n];
    let mut caps: Vec<f64> = Vec::new();
    let mut fractions: Vec<f64> = Vec::new();
    let mut t = 0.0;

    'outer: for w in statics.windows(2) {
        let (start, end) = (w[0], w[1]);
        let mid = 0.5 * (start + end);
        let d = demand.value_at(mid);
        if availability_aware {
            for (a, dev) in available.iter_mut().zip(devices) {
                *a = dev.availability.contains(mid);
            }
        }
        while end - t > TIME_EPS {
            caps.clear();
            caps.extend(groups.iter().map(|g| {
                g.members
                    .iter()
                    .filter(|&&i| available[i])
                    .map(|&i| devices[i].rated_power)
                    .sum::<f64>()
            }));
            let served = group_fractions(&caps, d, &mut fractions);

            for (g, &f) in groups.iter().zip(&fractions) {
                if f > 0.0 && g.value <= ZERO_TOL {
                    if !allow_negative {
                        traj.stopped_at = Some(t);
                        break 'outer;
                    }
                    for &i in &g.members {
                        if !crossed[i] {
                            crossed[i] = true;
                            traj.zero_crossings.push(ZeroCrossing {
                                device: i,
                                time: t + g.value.max(0.0) / f,
                            });
                        }
                    }
                }
            }

            let mut h = end - t;
            for k in 1..groups.len() {
                let (hi, lo) = (&groups[k - 1], &groups[k]);
                let closing = fractions[k - 1] - fractions[k];
                if closing > 0.0 {
                    h = h.min((hi.value - lo.value) / closing);
                }
            }
            for (g, &f) in groups.iter().zip(&fractions) {
                if f > 0.0 && g.value > ZERO_TOL {
                    h = h.min(g.value / f);
                }
            }
            let reaches_end = end - (t + h) <= TIME_EPS;
            if reaches_end {
                h = end - t;
            }

            let mut rates = vec![0.0; n];
            for (g, &f) in groups.iter().zip(&fractions) {
                for &i in &g.members {
                    rates[i] = f * devices[i].rated_power;
                }
            }
            traj.rates.push(RateVector(rates));
            traj.demand.push(d);
            traj.shortfall.push((d - served).max(0.0));

            for (g, &f) in groups.iter_mut().zip(&fractions) {
                if f > 0.0 {
                    let before = g.value;
                    g.value -= f * h;
                    if before > ZERO_TOL && g.value.abs() <= ZERO_TOL * before.max(1.0) {
                        g.value = 0.0;
                    }
                }
            }
            t = if reaches_end { end } else { t + h };
            merge_adjacent(&mut groups);

            let mut state = vec![0.0; n];
            for g in &groups {
                for &i in &g.members {
                    state[i] = g.value;
                }
            }
            traj.event_times.push(t);
            traj.states.push(StateVector(state));
            if traj.rates.len() > limit {
                return Err(Error::EventLimit { limit, time: t });
            }
        }
    }
    Ok(traj)
}

/// Merges neighbouring groups whose values have met, keeping the lower value.
fn merge_adjacent(groups: &mut Vec<SimGroup>) {
    let mut k = 1;
    while k < groups.len() {
        if groups[k - 1].value - groups[k].value <= GROUP_TOL {
            let lower = groups.remove(k);
            let upper = &mut groups[k - 1];
            upper.value = lower.value;
            upper.members.extend(lower.members);
        } else {
            k += 1;
        }
    }
}

/// Explicit first-order stepping of the same closed loop; a reference for the
/// event-driven integrator. Demand and availability are sampled at step
/// midpoints.
pub fn simulate_fixed_step(
    fleet: &Fleet,
    x0: &StateVector,
    demand: &DemandProfile,
    availability_aware: bool,
    allow_negative: bool,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::NonPositiveStep(dt));
    }
    validate(fleet, x0, demand)?;
    let devices = fleet.devices();
    let n = devices.len();
    let end = fleet.horizon_end();
    let steps = ((end / dt) - 1e-9).ceil().max(1.0) as usize;

    let mut traj = Trajectory {
        event_times: vec![0.0],
        states: vec![x0.clone()],
        rates: Vec::with_capacity(steps),
        demand: Vec::with_capacity(steps),
        shortfall: Vec::with_capacity(steps),
        availability_aware,
        allow_negative,
        stopped_at: None,
        zero_crossings: Vec::new(),
    };
    let mut crossed: Vec<bool> = x0.iter().map(|&v| v < 0.0).collect();
    let mut x = x0.clone();
    let mut caps = Vec::new();
    let mut fractions = Vec::new();
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = ((k + 1) as f64 * dt).min(end);
        let mid = 0.5 * (t0 + t1);
        let d = demand.value_at(mid);
        let groups = group_partition(&x, GROUP_TOL);
        caps.clear();
        caps.extend(groups.iter().map(|g| {
            g.members
                .iter()
                .filter(|&&i| !availability_aware || devices[i].availability.contains(mid))
                .map(|&i| devices[i].rated_power)
                .sum::<f64>()
        }));
        let served = group_fractions(&caps, d, &mut fractions);
        let mut rates = vec![0.0; n];
        for (g, &f) in groups.iter().zip(&fractions) {
            for &i in &g.members {
                rates[i] = f * devices[i].rated_power;
            }
        }
        let mut next = x.clone();
        for i in 0..n {
            next[i] -= rates[i] / devices[i].rated_power * (t1 - t0);
            if next[i] < 0.0 && !crossed[i] {
                crossed[i] = true;
                let slope = (x[i] - next[i]) / (t1 - t0);
                let time = t0 + x[i].max(0.0) / slope;
                traj.zero_crossings.push(ZeroCrossing { device: i, time });
                if !allow_negative && traj.stopped_at.is_none() {
                    traj.stopped_at = Some(time);
                }
            }
        }
        if traj.stopped_at.is_some() {
            break;
        }
        traj.rates.push(RateVector(rates));
        traj.demand.push(d);
        traj.shortfall.push((d - served).max(0.0));
        traj.event_times.push(t1);
        traj.states.push(next.clone());
        x = next;
    }
    Ok(traj)
}
