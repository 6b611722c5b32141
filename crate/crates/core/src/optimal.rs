//! Best effort for demand the fleet cannot serve: least unserved energy, and
//! latest first failure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{first_failure, polish, state_slack, Witness, FEASIBILITY_TOL};
use crate::fixed_point::{solve_fixed_point, FixedPointOptions, FixedPointResult, LambdaVector};
use crate::ggddf::Trajectory;
use crate::model::{DemandProfile, Fleet};
use crate::schedule::DispatchSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnservedResult {
    /// kWh of demand left unmet.
    pub unserved_energy: f64,
    pub served_energy: f64,
    /// Admissible schedule; it may fall short of demand.
    pub schedule: DispatchSchedule,
    pub lambda_bar: LambdaVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtfResult {
    /// Hours until the first failure under the best schedule.
    pub tau_star: f64,
    /// Schedule on `[0, tau_star]`; absent when `tau_star` is zero.
    pub schedule: Option<DispatchSchedule>,
    /// `τ_0, τ_1, …`, starting from the horizon end.
    pub iterates: Vec<f64>,
    /// False when `max_outer` ran out before the iterates settled.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct TtfOptions {
    pub tau_tol: f64,
    pub max_outer: usize,
    pub fixed_point: FixedPointOptions,
}

impl Default for TtfOptions {
    fn default() -> Self {
        Self {
            tau_tol: 1e-6,
            max_outer: 100,
            fixed_point: FixedPointOptions::default(),
        }
    }
}

/// `∫ max(d − Σ_j u_j, 0) dt`.
pub fn unserved_energy(schedule: &DispatchSchedule, demand: &DemandProfile) -> Result<f64> {
    schedule.unserved(demand)
}

/// First instant the run cannot continue: some state drops below zero, or the
/// demand exceeds the available rated power. The end of the run otherwise.
pub fn time_to_failure(traj: &Trajectory) -> f64 {
    failure_within(traj, FEASIBILITY_TOL)
}

fn failure_within(traj: &Trajectory, slack: f64) -> f64 {
    match first_failure(traj, slack) {
        Some(Witness::NegativeState { time, .. }) | Some(Witness::Shortfall { time, .. }) => time,
        _ => traj.end_time(),
    }
}

pub fn min_unserved_energy(fleet: &Fleet, demand: &DemandProfile) -> Result<UnservedResult> {
    min_unserved_energy_with(fleet, demand, &FixedPointOptions::default())
}

/// Least unserved energy over admissible schedules.
///
/// The augmented run from the fixed point ends with deficit
/// `Σ_j max(0, −P̄_j x̃_j(τ̄))` plus whatever the available power could not
/// cover. The returned schedule is that run restricted to the availability
/// windows, with each device stopped once its real energy is spent.
pub fn min_unserved_energy_with(fleet: &Fleet, demand: &DemandProfile, opts: &FixedPointOptions) -> Result<UnservedResult> {
    let fp = polish(fleet, demand, solve_fixed_point(fleet, demand, opts)?, opts);
    let traj = &fp.trajectory;
    let overdraw: f64 = traj
        .terminal_state()
        .iter()
        .zip(fleet.rated_powers())
        .map(|(x, p)| (-x * p).max(0.0))
        .sum();
    let short: f64 = traj.segments().zip(&traj.shortfall).map(|((a, b, _), s)| s * (b - a)).sum();
    let schedule = DispatchSchedule::restricted_from(traj, fleet)?.clip_to_budget(fleet)?;
    let unserved = overdraw + short;
    Ok(UnservedResult {
        unserved_energy: unserved,
        served_energy: demand.energy() - unserved,
        schedule,
        lambda_bar: fp.lambda_bar,
    })
}

pub fn max_time_to_failure(fleet: &Fleet, demand: &DemandProfile) -> Result<TtfResult> {
    max_time_to_failure_with(fleet, demand, &TtfOptions::default())
}

/// Latest achievable first failure.
///
/// Starting from the full horizon, each round solves the fixed point on
/// `[0, τ_k]` and sets `τ_{k+1}` to the failure time of the augmented run.
/// Iterates never increase; the loop stops once a round moves by at most
/// `tau_tol`.
pub fn max_time_to_failure_with(fleet: &Fleet, demand: &DemandProfile, opts: &TtfOptions) -> Result<TtfResult> {
    if !(opts.tau_tol > 0.0) {
        return Err(Error::InvalidParams(format!("tau_tol must be positive, got {}", opts.tau_tol)));
    }
    let mut tau = fleet.horizon_end();
    let mut iterates = vec![tau];
    let mut last: Option<(Fleet, FixedPointResult)> = None;
    let mut converged = false;
    for _ in 0..opts.max_outer {
        if tau <= 1e-12 {
            converged = true;
            break;
        }
        let window = fleet.truncate(tau)?;
        let d = demand.truncate(tau)?;
        // Consecutive windows differ little, so the last fixed point is a good start.
        let mut inner = opts.fixed_point.clone();
        if let Some((_, prev)) = &last {
            inner.warm_start = Some(prev.lambda_bar.clone());
        }
        let fp = solve_fixed_point(&window, &d, &inner)?;
        let next = failure_within(&fp.trajectory, state_slack(&window, fp.residual));
        if next > tau + 1e-9 * tau.max(1.0) {
            return Err(Error::NonMonotoneIterates { previous: tau, next });
        }
        let next = next.min(tau);
        iterates.push(next);
        let settled = tau - next <= opts.tau_tol;
        last = Some((window, fp));
        tau = next;
        if settled {
            converged = true;
            break;
        }
    }
    let schedule = match last {
        Some((window, fp)) if tau > 1e-12 => {
            let s = DispatchSchedule::restricted_from(&fp.trajectory, &window)?.truncate(tau)?;
            Some(s.clip_to_budget(&fleet.truncate(tau)?)?)
        }
        _ => None,
    };
    Ok(TtfResult { tau_star: tau.max(0.0), schedule, iterates, converged })
}
