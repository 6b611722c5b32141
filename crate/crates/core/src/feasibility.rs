//! Feasibility verdicts for a demand profile.
//!
//! [`feasibility_by_dispatch`] is constructive: it builds the augmented run and,
//! when that run stays nonnegative, restricts it to the availability windows.
//! [`subset_feasibility_check`] enumerates every slot subset `W` and checks
//! `Σ_{k∈W} D_k ≤ Σ_j min(Σ_{k∈W} c_jk, E_j)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{solve_fixed_point, FixedPointOptions, FixedPointResult, LambdaVector};
use crate::ggddf::Trajectory;
use crate::model::{check_dim, DemandProfile, Fleet, StateVector};
use crate::oracle::{discretize, integer_scale, oracle_schedule, DiscreteInstance};
use crate::schedule::{DispatchSchedule, SCHEDULE_TOL};

/// Most slots the subset enumeration accepts.
pub const SUBSET_SLOT_CAP: usize = 24;

/// Slack (hours) below zero still accepted as an empty device.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Why a demand profile cannot be served.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Slot set whose demand exceeds what the fleet can deliver in it.
    Subset {
        /// Zero-based slot indices.
        slots: Vec<usize>,
        slot_width: f64,
        demand_kwh: f64,
        bound_kwh: f64,
    },
    /// The augmented run first drives `device` below zero at `time`.
    NegativeState { device: usize, time: f64 },
    /// Demand exceeds the available rated power from `time` on.
    Shortfall { time: f64, kw: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<DispatchSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Fixed point behind the verdict, when one was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<LambdaVector>,
}

/// Tolerance on negative states. A fixed point known only to within `residual`
/// moves the augmented start by at most `residual·μ_j` per device, and the
/// run is a sup-norm contraction, so every later state moves by at most the
/// largest of these.
pub(crate) fn state_slack(fleet: &Fleet, residual: f64) -> f64 {
    FEASIBILITY_TOL + residual * fleet.off_window_measures().iter().fold(0.0, |m, &mu| f64::max(m, mu))
}

/// First failure of an augmented run: a state below `-slack` or a segment
/// with shortfall, whichever comes first.
pub(crate) fn first_failure(traj: &Trajectory, slack: f64) -> Option<Witness> {
    for (k, (a, b, _)) in traj.segments().enumerate() {
        let d = traj.demand[k];
        if traj.shortfall[k] > SCHEDULE_TOL * (1.0 + d) {
            return Some(Witness::Shortfall { time: a, kw: traj.shortfall[k] });
        }
        let (x0, x1) = (&traj.states[k], &traj.states[k + 1]);
        let mut hit: Option<(usize, f64)> = None;
        for (i, (&p, &q)) in x0.iter().zip(x1.iter()).enumerate() {
            if q < -slack {
                let t = if p <= 0.0 { a } else { a + p * (b - a) / (p - q) };
                if hit.is_none_or(|(_, s)| t < s) {
                    hit = Some((i, t));
                }
            }
        }
        if let Some((device, time)) = hit {
            return Some(Witness::NegativeState { device, time });
        }
    }
    None
}

/// Residual the verdict aims for before reading off a schedule.
const POLISH_TOL: f64 = 1e-12;

/// A residual of `r` can leave up to `r·μ_j` hours of budget unaccounted, far
/// above the schedule tolerance at the default `1e-8`. Restarting from the
/// solution with a tighter target usually closes that in a few steps; if not,
/// the coarser point stands.
pub(crate) fn polish(fleet: &Fleet, demand: &DemandProfile, fp: FixedPointResult, opts: &FixedPointOptions) -> FixedPointResult {
    if fp.residual <= POLISH_TOL {
        return fp;
    }
    let tight = FixedPointOptions {
        tol: POLISH_TOL,
        warm_start: Some(fp.lambda_bar.clone()),
        ..opts.clone()
    };
    solve_fixed_point(fleet, demand, &tight).unwrap_or(fp)
}

fn verdict_from_fixed_point(fleet: &Fleet, demand: &DemandProfile, fp: FixedPointResult) -> Result<FeasibilityVerdict> {
    if let Some(w) = first_failure(&fp.trajectory, state_slack(fleet, fp.residual)) {
        return Ok(FeasibilityVerdict {
            feasible: false,
            schedule: None,
            witness: Some(w),
            lambda_bar: Some(fp.lambda_bar),
        });
    }
    let schedule = DispatchSchedule::restricted_from(&fp.trajectory, fleet)?;
    // An unconverged residual leaves at most residual·μ_j hours of budget unaccounted.
    let slack = fleet
        .devices()
        .iter()
        .zip(fleet.off_window_measures())
        .map(|(d, mu)| d.rated_power * (FEASIBILITY_TOL + fp.residual * mu))
        .fold(SCHEDULE_TOL, f64::max);
    schedule.verify(fleet, demand, true, slack)?;
    Ok(FeasibilityVerdict {
        feasible: true,
        schedule: Some(schedule),
        witness: None,
        lambda_bar: Some(fp.lambda_bar),
    })
}

/// Coarsest slot width `horizon / T`, `T ≤ cap`, that every breakpoint and
/// availability endpoint sits on.
pub fn aligned_slot_width(fleet: &Fleet, demand: &DemandProfile, cap: usize) -> Option<f64> {
    let h = fleet.horizon_end();
    (1..=cap).map(|t| h / t as f64).find(|&w| discretize(fleet, demand, w).is_ok())
}

/// Constructive verdict with default solver options.
pub fn feasibility_by_dispatch(fleet: &Fleet, demand: &DemandProfile) -> Result<FeasibilityVerdict> {
    feasibility_by_dispatch_with(fleet, demand, &FixedPointOptions::default())
}

/// Constructive verdict. If the fixed-point solver does not converge and the
/// instance sits on a grid of at most [`SUBSET_SLOT_CAP`] slots, the subset
/// check decides instead; otherwise the solver error is returned.
pub fn feasibility_by_dispatch_with(fleet: &Fleet, demand: &DemandProfile, opts: &FixedPointOptions) -> Result<FeasibilityVerdict> {
    match solve_fixed_point(fleet, demand, opts) {
        Ok(fp) => verdict_from_fixed_point(fleet, demand, polish(fleet, demand, fp, opts)),
        Err(err @ Error::NonConvergence { .. }) => match aligned_slot_width(fleet, demand, SUBSET_SLOT_CAP) {
            Some(w) => subset_feasibility_check(fleet, demand, w),
            None => Err(err),
        },
        Err(e) => Err(e),
    }
}

/// Verdict from the subset inequalities on a `slot_width` grid. A feasible
/// verdict carries a schedule read off a maximum flow.
pub fn subset_feasibility_check(fleet: &Fleet, demand: &DemandProfile, slot_width: f64) -> Result<FeasibilityVerdict> {
    let inst = discretize(fleet, demand, slot_width)?;
    if inst.num_slots() > SUBSET_SLOT_CAP {
        return Err(Error::TooManySlots { slots: inst.num_slots(), cap: SUBSET_SLOT_CAP });
    }
    match violated_subset(&inst)? {
        Some(w) => Ok(FeasibilityVerdict { feasible: false, schedule: None, witness: Some(w), lambda_bar: None }),
        None => {
            let schedule = oracle_schedule::<rand_chacha::ChaCha8Rng>(&inst, None)?;
            schedule.verify(fleet, demand, true, SCHEDULE_TOL)?;
            Ok(FeasibilityVerdict { feasible: true, schedule: Some(schedule), witness: None, lambda_bar: None })
        }
    }
}

/// Slot sets are scanned in Gray-code order within blocks that fix the
/// highest slots; the earliest violation in the earliest block wins, so the
/// result does not depend on thread scheduling. Slots with no demand cannot
/// tighten an inequality and are skipped.
pub fn violated_subset(inst: &DiscreteInstance) -> Result<Option<Witness>> {
    if inst.num_slots() > SUBSET_SLOT_CAP {
        return Err(Error::TooManySlots { slots: inst.num_slots(), cap: SUBSET_SLOT_CAP });
    }
    let scale = integer_scale(inst)?;
    let int = |v: f64| (v * scale).round() as i64;
    let slots: Vec<usize> = (0..inst.num_slots()).filter(|&k| inst.demand[k] > 0.0).collect();
    let demand: Vec<i64> = slots.iter().map(|&k| int(inst.demand[k])).collect();
    let caps: Vec<Vec<i64>> = inst.caps.iter().map(|row| slots.iter().map(|&k| int(row[k])).collect()).collect();
    let supplies: Vec<i64> = inst.supplies.iter().map(|&s| int(s)).collect();
    let m = slots.len();
    let high = m.min(6);
    let low = m - high;

    let scan = |block: u64| -> Option<(u64, i64, i64)> {
        let mut mask = block << low;
        let mut dem = 0i64;
        let mut sums = vec![0i64; supplies.len()];
        for b in 0..m {
            if mask >> b & 1 == 1 {
                dem += demand[b];
                for (s, row) in sums.iter_mut().zip(&caps) {
                    *s += row[b];
                }
            }
        }
        let bound = |sums: &[i64]| sums.iter().zip(&supplies).map(|(s, e)| (*s).min(*e)).sum::<i64>();
        let b0 = bound(&sums);
        if dem > b0 {
            return Some((mask, dem, b0));
        }
        for i in 1u64..(1u64 << low) {
            let b = i.trailing_zeros() as usize;
            let sign = if mask >> b & 1 == 1 { -1 } else { 1 };
            mask ^= 1 << b;
            dem += sign * demand[b];
            for (s, row) in sums.iter_mut().zip(&caps) {
                *s += sign * row[b];
            }
            let bd = bound(&sums);
            if dem > bd {
                return Some((mask, dem, bd));
            }
        }
        None
    };
    let hit = (0..1u64 << high).into_par_iter().find_map_first(scan);
    Ok(hit.map(|(mask, dem, bound)| Witness::Subset {
        slots: (0..m).filter(|b| mask >> b & 1 == 1).map(|b| slots[b]).collect(),
        slot_width: inst.slot_width,
        demand_kwh: dem as f64 / scale,
        bound_kwh: bound as f64 / scale,
    }))
}

/// Whether `x_b` is at least as flexible as `x_a` for a fully available
/// fleet: every profile servable from `x_a` is servable from `x_b`.
///
/// Decided by `Σ_j min(m, x_bj) P̄_j ≥ Σ_j min(m, x_aj) P̄_j` for all `m ≥ 0`.
/// Both sides are concave and piecewise linear in `m` with kinks at the state
/// entries, so checking those kinks suffices. Negative entries count as zero.
pub fn flexibility_dominates(x_a: &StateVector, x_b: &StateVector, fleet: &Fleet) -> Result<bool> {
    check_dim(fleet.len(), x_a.len())?;
    check_dim(fleet.len(), x_b.len())?;
    let p = fleet.rated_powers();
    let clamp = |x: &StateVector| x.iter().map(|v| v.max(0.0)).collect::<Vec<_>>();
    let (a, b) = (clamp(x_a), clamp(x_b));
    let served = |x: &[f64], m: f64| x.iter().zip(&p).map(|(x, p)| x.min(m) * p).sum::<f64>();
    let scale = 1.0 + served(&a, f64::INFINITY).max(served(&b, f64::INFINITY));
    Ok(a.iter().chain(&b).all(|&m| served(&b, m) >= served(&a, m) - 1e-9 * scale))
}
