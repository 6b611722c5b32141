//! Instance generators and property checks shared by the integration tests
//! and the acceptance harness.

#![allow(dead_code)]

use fleetdispatch::feasibility::feasibility_by_dispatch;
use fleetdispatch::fixed_point::{lambda_map, outside_energy, solve_fixed_point, FixedPointOptions, LambdaVector};
use fleetdispatch::ggddf::{augmented_demand_pointwise, policy_rates, simulate, Trajectory};
use fleetdispatch::model::{AvailabilitySet, DemandProfile, Device, Fleet, StateVector};
use fleetdispatch::schedule::DispatchSchedule;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A fleet, a demand on its horizon and a start state (not necessarily the
/// fleet's own energies).
#[derive(Debug, Clone)]
pub struct System {
    pub fleet: Fleet,
    pub demand: DemandProfile,
    pub x0: StateVector,
}

fn sorted_points<R: Rng>(rng: &mut R, k: usize, end: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..end)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Real-valued breakpoints and windows, ties in the start state on purpose.
pub fn random_system<R: Rng>(rng: &mut R, max_n: usize) -> System {
    let n = rng.random_range(1..=max_n);
    let h: f64 = rng.random_range(2.0..12.0);
    let devices: Vec<Device> = (0..n)
        .map(|j| {
            let mut pairs = Vec::new();
            for _ in 0..rng.random_range(0..=2) {
                let p = sorted_points(rng, 2, h);
                if p[1] - p[0] > 1e-3 {
                    pairs.push((p[0], p[1]));
                }
            }
            let avail = AvailabilitySet::from_pairs(&pairs).unwrap();
            Device::new(format!("r{j}"), rng.random_range(0.5..3.0), rng.random_range(0.0..8.0), avail).unwrap()
        })
        .collect();
    let fleet = Fleet::new(devices, h).unwrap();
    let total: f64 = fleet.rated_powers().iter().sum();
    let k = rng.random_range(1..=6);
    let mut bps = vec![0.0];
    bps.extend(sorted_points(rng, k - 1, h).into_iter().filter(|&t| t > 1e-3 && t < h - 1e-3));
    bps.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    bps.push(h);
    let values = (1..bps.len())
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..0.8 * total) })
        .collect();
    let demand = DemandProfile::new(bps, values).unwrap();
    let mut x0 = fleet.initial_state().0;
    if n > 1 && rng.random_bool(0.3) {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        x0[j] = x0[i];
    }
    System { fleet, demand, x0: StateVector(x0) }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Union of the event times of several runs, within the common horizon.
fn merged_times(runs: &[&Trajectory]) -> Vec<f64> {
    let mut t: Vec<f64> = runs.iter().flat_map(|r| r.event_times.iter().copied()).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

pub fn check_order_preservation(s: &System, aware: bool) -> Check {
    let traj = simulate(&s.fleet, &s.x0, &s.demand, aware, true).map_err(|e| e.to_string())?;
    let n = s.x0.len();
    for (t, x) in traj.event_times.iter().zip(&traj.states) {
        for i in 0..n {
            for j in 0..n {
                if s.x0[i] >= s.x0[j] && x[i] < x[j] - 1e-9 {
                    return Err(format!("t={t}: x{i}={} fell below x{j}={}", x[i], x[j]));
                }
            }
        }
    }
    Ok(())
}

pub fn check_equal_start(s: &System, aware: bool) -> Check {
    let mut x0 = s.x0.clone();
    if x0.len() < 2 {
        return Ok(());
    }
    x0[1] = x0[0];
    let traj = simulate(&s.fleet, &x0, &s.demand, aware, true).map_err(|e| e.to_string())?;
    for (t, x) in traj.event_times.iter().zip(&traj.states) {
        if x[0] != x[1] {
            return Err(format!("t={t}: {} != {}", x[0], x[1]));
        }
    }
    Ok(())
}

pub fn check_monotonicity<R: Rng>(s: &System, aware: bool, rng: &mut R) -> Check {
    let hi = StateVector(s.x0.iter().map(|x| x + rng.random_range(0.0..3.0)).collect());
    let a = simulate(&s.fleet, &hi, &s.demand, aware, true).map_err(|e| e.to_string())?;
    let b = simulate(&s.fleet, &s.x0, &s.demand, aware, true).map_err(|e| e.to_string())?;
    for t in merged_times(&[&a, &b]) {
        let (xa, xb) = (a.state_at(t), b.state_at(t));
        if let Some(i) = (0..xa.len()).find(|&i| xa[i] < xb[i] - 1e-9) {
            return Err(format!("t={t}: device {i}: {} < {}", xa[i], xb[i]));
        }
    }
    Ok(())
}

pub fn check_translation<R: Rng>(s: &System, aware: bool, rng: &mut R) -> Check {
    let delta = rng.random_range(-4.0..4.0);
    let shifted = StateVector(s.x0.iter().map(|x| x + delta).collect());
    let a = simulate(&s.fleet, &shifted, &s.demand, aware, true).map_err(|e| e.to_string())?;
    let b = simulate(&s.fleet, &s.x0, &s.demand, aware, true).map_err(|e| e.to_string())?;
    for t in merged_times(&[&a, &b]) {
        let (xa, xb) = (a.state_at(t), b.state_at(t));
        if let Some(i) = (0..xa.len()).find(|&i| !close(xa[i], xb[i] + delta, 1e-9)) {
            return Err(format!("t={t}, delta={delta}: device {i}: {} vs {}", xa[i], xb[i] + delta));
        }
    }
    Ok(())
}

pub fn check_contraction<R: Rng>(s: &System, aware: bool, rng: &mut R) -> Check {
    let other = StateVector(s.x0.iter().map(|x| x + rng.random_range(-3.0..3.0)).collect());
    let gap = s.x0.max_abs_diff(&other);
    let a = simulate(&s.fleet, &other, &s.demand, aware, true).map_err(|e| e.to_string())?;
    let b = simulate(&s.fleet, &s.x0, &s.demand, aware, true).map_err(|e| e.to_string())?;
    for t in merged_times(&[&a, &b]) {
        let d = a.state_at(t).max_abs_diff(&b.state_at(t));
        if d > gap + 1e-9 {
            return Err(format!("t={t}: distance {d} exceeds initial {gap}"));
        }
    }
    Ok(())
}

/// The aware policy equals the plain one driven by the augmented demand.
pub fn check_pointwise_augmentation<R: Rng>(s: &System, rng: &mut R) -> Check {
    let t = rng.random_range(0.0..s.fleet.horizon_end());
    let d = s.demand.value_at(t);
    let aware = policy_rates(t, &s.x0, d, &s.fleet, true);
    let plain = policy_rates(t, &s.x0, augmented_demand_pointwise(t, &s.x0, d, &s.fleet), &s.fleet, false);
    for (i, (a, b)) in aware.rates.iter().zip(plain.rates.iter()).enumerate() {
        if !close(*a, *b, 1e-12) {
            return Err(format!("t={t}: device {i}: aware {a} vs plain {b}"));
        }
    }
    Ok(())
}

/// The aware run equals the plain run driven by its own augmented demand.
pub fn check_trajectory_augmentation(s: &System) -> Check {
    let aware = simulate(&s.fleet, &s.x0, &s.demand, true, true).map_err(|e| e.to_string())?;
    let d_tilde = fleetdispatch::fixed_point::augmented_demand(&aware, &s.fleet).map_err(|e| e.to_string())?;
    let plain = simulate(&s.fleet, &s.x0, &d_tilde, false, true).map_err(|e| e.to_string())?;
    for t in &aware.event_times {
        let d = aware.state_at(*t).max_abs_diff(&plain.state_at(*t));
        if d > 1e-9 {
            return Err(format!("t={t}: paths differ by {d}"));
        }
    }
    Ok(())
}

pub fn check_power_balance(s: &System, aware: bool) -> Check {
    let traj = simulate(&s.fleet, &s.x0, &s.demand, aware, true).map_err(|e| e.to_string())?;
    let devices = s.fleet.devices();
    for (k, (a, b, rates)) in traj.segments().enumerate() {
        if traj.shortfall[k] > 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let served: f64 = rates
            .iter()
            .zip(devices)
            .filter(|(_, d)| !aware || d.availability.contains(mid))
            .map(|(u, _)| u)
            .sum();
        if !close(served, traj.demand[k], 1e-9 * (1.0 + traj.demand[k])) {
            return Err(format!("[{a}, {b}]: served {served}, demand {}", traj.demand[k]));
        }
    }
    Ok(())
}

pub fn check_self_map<R: Rng>(s: &System, rng: &mut R) -> Check {
    let lambda = LambdaVector((0..s.fleet.len()).map(|_| rng.random_range(0.0..=1.0)).collect());
    let image = lambda_map(&lambda, &s.fleet, &s.demand).map_err(|e| e.to_string())?;
    match image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(format!("image entry {v} outside the unit interval")),
        None => Ok(()),
    }
}

/// `‖Λ(a) − Λ(b)‖ ≤ M·max μ·‖a − b‖`, `M` the largest window endpoint count.
pub fn check_continuity<R: Rng>(s: &System, rng: &mut R) -> Check {
    let n = s.fleet.len();
    let a = LambdaVector((0..n).map(|_| rng.random_range(0.0..=1.0)).collect());
    let b = LambdaVector(a.iter().map(|v| (v + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)).collect());
    let la = lambda_map(&a, &s.fleet, &s.demand).map_err(|e| e.to_string())?;
    let lb = lambda_map(&b, &s.fleet, &s.demand).map_err(|e| e.to_string())?;
    let m = s.fleet.max_off_window_endpoints().max(1) as f64;
    let mu = s.fleet.off_window_measures().into_iter().fold(0.0, f64::max);
    let bound = m * mu * a.max_abs_diff(&b) + 1e-6;
    let got = la.max_abs_diff(&lb);
    if got > bound {
        return Err(format!("moved {got}, bound {bound}"));
    }
    Ok(())
}

/// Energy drawn outside the windows equals the augmented demand surplus.
pub fn check_energy_bookkeeping<R: Rng>(s: &System, rng: &mut R) -> Check {
    let lambda = LambdaVector((0..s.fleet.len()).map(|_| rng.random_range(0.0..=1.0)).collect());
    let x = fleetdispatch::fixed_point::augmented_initial_state(&s.fleet, &lambda).map_err(|e| e.to_string())?;
    let traj = simulate(&s.fleet, &x, &s.demand, true, true).map_err(|e| e.to_string())?;
    let delta: f64 = outside_energy(&traj, &s.fleet).map_err(|e| e.to_string())?.iter().sum();
    let d_tilde = fleetdispatch::fixed_point::augmented_demand(&traj, &s.fleet).map_err(|e| e.to_string())?;
    let surplus = d_tilde.energy() - s.demand.energy();
    if !close(delta, surplus, 1e-9 * (1.0 + delta.abs())) {
        return Err(format!("outside energy {delta}, surplus {surplus}"));
    }
    Ok(())
}

/// Energy each schedule delivers within `[a, b]`, summed over devices.
pub fn delivered_between(s: &DispatchSchedule, a: f64, b: f64) -> f64 {
    s.segments()
        .map(|(s0, s1, rates)| {
            let len = (s1.min(b) - s0.max(a)).max(0.0);
            len * rates.iter().sum::<f64>()
        })
        .sum()
}

/// Largest energy the fleet can deliver over a set of slots.
pub fn subset_bound(fleet: &Fleet, slot_width: f64, slots: &[usize]) -> f64 {
    fleet
        .devices()
        .iter()
        .map(|d| {
            let open = slots
                .iter()
                .map(|&k| d.availability.measure_between(k as f64 * slot_width, (k + 1) as f64 * slot_width))
                .sum::<f64>();
            (d.rated_power * open).min(d.initial_energy)
        })
        .sum()
}

/// Random slot subsets: what the schedule delivers on them never exceeds
/// what the fleet could.
pub fn check_subset_necessity<R: Rng>(
    schedule: &DispatchSchedule,
    fleet: &Fleet,
    slot_width: f64,
    samples: usize,
    rng: &mut R,
) -> Check {
    let slots = (fleet.horizon_end() / slot_width).round() as usize;
    let mut all: Vec<usize> = (0..slots).collect();
    for _ in 0..samples {
        all.shuffle(rng);
        let w = &all[..rng.random_range(1..=slots)];
        let got: f64 = w
            .iter()
            .map(|&k| delivered_between(schedule, k as f64 * slot_width, (k + 1) as f64 * slot_width))
            .sum();
        let bound = subset_bound(fleet, slot_width, w);
        if got > bound + 1e-9 * (1.0 + bound) {
            return Err(format!("slots {w:?}: delivered {got} > bound {bound}"));
        }
    }
    Ok(())
}

/// Schedule from the dispatch test, when the demand is feasible.
pub fn dispatch_schedule(fleet: &Fleet, demand: &DemandProfile) -> Option<DispatchSchedule> {
    feasibility_by_dispatch(fleet, demand).ok().and_then(|v| v.schedule)
}

pub fn fixed_point(fleet: &Fleet, demand: &DemandProfile) -> fleetdispatch::fixed_point::FixedPointResult {
    solve_fixed_point(fleet, demand, &FixedPointOptions::default()).unwrap()
}

/// Time-to-discharge left after running `schedule` from the fleet's energies.
pub fn terminal_state(schedule: &DispatchSchedule, fleet: &Fleet) -> StateVector {
    StateVector(
        fleet
            .devices()
            .iter()
            .zip(schedule.delivered_energy())
            .map(|(d, used)| (d.initial_energy - used) / d.rated_power)
            .collect(),
    )
}

/// Largest gap between the event-driven run and first-order stepping with
/// step `dt`, over the stepping grid.
pub fn fixed_step_gap(s: &System, aware: bool, dt: f64) -> Result<f64, String> {
    let exact = simulate(&s.fleet, &s.x0, &s.demand, aware, true).map_err(|e| e.to_string())?;
    let stepped = fleetdispatch::ggddf::simulate_fixed_step(&s.fleet, &s.x0, &s.demand, aware, true, dt)
        .map_err(|e| e.to_string())?;
    Ok(stepped
        .event_times
        .iter()
        .zip(&stepped.states)
        .map(|(t, x)| exact.state_at(*t).max_abs_diff(x))
        .fold(0.0, f64::max))
}
