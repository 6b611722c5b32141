//! Augmentation of initial energies so that availability constraints can be
//! dropped.
//!
//! For `λ ∈ [0,1]^N` each device is granted `λ_i · μ(T \ A_i)` extra hours of
//! time-to-discharge. Running the availability-aware policy from the
//! augmented state and measuring the energy each device delivers outside its
//! window gives the map `Λ`. At a fixed point the fictitious energy exactly
//! pays for the off-window discharge, and the run restricted to each window is
//! a dispatch for the original fleet whenever one exists.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggddf::{simulate, Trajectory};
use crate::model::{check_dim, DemandProfile, Fleet, StateVector};

/// Fractions of full-rate off-window energy granted to each device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LambdaVector(pub Vec<f64>);

impl LambdaVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn max_abs_diff(&self, other: &LambdaVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for LambdaVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial relaxation weight `α` in `λ ← (1-α)λ + αΛ(λ)`.
    pub damping: f64,
    pub warm_start: Option<LambdaVector>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            damping: 1.0,
            warm_start: None,
        }
    }
}

/// Iterations without net residual decrease before damping is engaged.
const STALL_WINDOW: usize = 10;
const FALLBACK_DAMPING: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub lambda_bar: LambdaVector,
    pub x_tilde0: StateVector,
    /// Augmented demand on the trajectory's event grid.
    pub d_tilde: DemandProfile,
    /// Number of evaluations of `Λ`.
    pub iterations: usize,
    /// `‖Λ(λ̄) − λ̄‖∞`.
    pub residual: f64,
    /// Relaxation weight in use when the solver stopped.
    pub damping: f64,
    /// Availability-aware run from `x_tilde0`, negative states allowed.
    pub trajectory: Trajectory,
}

/// `x̃_i(0) = x_i(0) + λ_i μ(T \ A_i)`.
pub fn augmented_initial_state(fleet: &Fleet, lambda: &LambdaVector) -> Result<StateVector> {
    check_dim(fleet.len(), lambda.len())?;
    let x0 = fleet.initial_state();
    Ok(StateVector(
        x0.iter()
            .zip(fleet.off_window_measures())
            .zip(lambda.iter())
            .map(|((x, mu), l)| x + l * mu)
            .collect(),
    ))
}

/// Energy (kWh) each device delivers outside its availability set.
pub fn outside_energy(traj: &Trajectory, fleet: &Fleet) -> Result<Vec<f64>> {
    check_dim(fleet.len(), traj.initial_state().len())?;
    let mut delta = vec![0.0; fleet.len()];
    for (a, b, rates) in traj.segments() {
        for ((d, dev), u) in delta.iter_mut().zip(fleet.devices()).zip(rates.iter()) {
            if *u > 0.0 {
                let off = (b - a) - dev.availability.measure_between(a, b);
                *d += u * off;
            }
        }
    }
    Ok(delta)
}

/// Augmented demand `d + Σ_{j unavailable} u_j` on each trajectory segment.
pub fn augmented_demand(traj: &Trajectory, fleet: &Fleet) -> Result<DemandProfile> {
    let values = traj
        .segments()
        .zip(&traj.demand)
        .map(|((a, b, rates), d)| {
            let mid = 0.5 * (a + b);
            d + fleet
                .devices()
                .iter()
                .zip(rates.iter())
                .filter(|(dev, _)| !dev.availability.contains(mid))
                .map(|(_, u)| u)
                .sum::<f64>()
        })
        .collect();
    DemandProfile::new(traj.event_times.clone(), values)
}

fn normalize(delta: &[f64], fleet: &Fleet, mu: &[f64]) -> LambdaVector {
    LambdaVector(
        delta
            .iter()
            .zip(fleet.devices())
            .zip(mu)
            .map(|((&d, dev), &m)| {
                if m > 0.0 {
                    (d / (dev.rated_power * m)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

fn evaluate(
    lambda: &LambdaVector,
    fleet: &Fleet,
    demand: &DemandProfile,
    mu: &[f64],
) -> Result<(LambdaVector, StateVector, Trajectory)> {
    let x_tilde = augmented_initial_state(fleet, lambda)?;
    let traj = simulate(fleet, &x_tilde, demand, true, true)?;
    let delta = outside_energy(&traj, fleet)?;
    Ok((normalize(&delta, fleet, mu), x_tilde, traj))
}

/// The map `Λ`. Devices that are always available map to zero.
pub fn lambda_map(lambda: &LambdaVector, fleet: &Fleet, demand: &DemandProfile) -> Result<LambdaVector> {
    let mu = fleet.off_window_measures();
    evaluate(lambda, fleet, demand, &mu).map(|(l, _, _)| l)
}

/// An evaluated iterate.
struct Point {
    lambda: LambdaVector,
    step: Vec<f64>,
    residual: f64,
    x_tilde0: StateVector,
    trajectory: Trajectory,
}

fn point(lambda: LambdaVector, fleet: &Fleet, demand: &DemandProfile, mu: &[f64]) -> Result<Point> {
    let (mapped, x_tilde0, trajectory) = evaluate(&lambda, fleet, demand, mu)?;
    let step: Vec<f64> = mapped.iter().zip(lambda.iter()).map(|(m, l)| m - l).collect();
    let residual = step.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
    Ok(Point { lambda, step, residual, x_tilde0, trajectory })
}

/// `q` with `r ≈ q·prev`, if the two residuals are parallel.
fn parallel_ratio(r: &[f64], prev: &[f64]) -> Option<f64> {
    let pp: f64 = prev.iter().map(|p| p * p).sum();
    if pp == 0.0 {
        return None;
    }
    let q = forward_ratio(r, prev);
    let off = r.iter().zip(prev).fold(0.0, |m: f64, (a, b)| m.max((a - q * b).abs()));
    let norm = r.iter().fold(0.0, |m: f64, a| m.max(a.abs()));
    (off <= 1e-6 * norm).then_some(q)
}

/// Component of `r` along `prev`, relative to `prev`.
fn forward_ratio(r: &[f64], prev: &[f64]) -> f64 {
    let pp: f64 = prev.iter().map(|p| p * p).sum();
    r.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>() / pp
}

/// Largest `s` keeping `λ + s·r` inside the unit box. Components with a
/// negligible share of `r` are left to the clamp in `moved`, or one creeping
/// towards its bound would pin `s` near one.
fn box_step(lambda: &[f64], r: &[f64]) -> f64 {
    let floor = 1e-3 * r.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
    lambda.iter().zip(r).fold(f64::INFINITY, |s, (&l, &d)| {
        if d > floor {
            s.min((1.0 - l) / d)
        } else if d < -floor {
            s.min(l / -d)
        } else {
            s
        }
    })
}

fn moved(lambda: &LambdaVector, r: &[f64], s: f64) -> LambdaVector {
    LambdaVector(lambda.iter().zip(r).map(|(l, d)| (l + s * d).clamp(0.0, 1.0)).collect())
}

/// Searches along `λ + s·r`, `r` the residual at `cur`, for where the drift
/// along `r` stops. A trial is short while its residual still points along
/// `r` at a similar size, and overshoots otherwise. The bracket between the
/// two shrinks by regula falsi on the forward component once an overshoot
/// has turned back, by bisection otherwise. Returns a trial that halves the
/// residual if one turns up, else the furthest short trial, else the best
/// trial if it improves on `cur`; also the evaluations used.
fn line_search(
    cur: &Point,
    s_max: f64,
    alpha: f64,
    budget: usize,
    mut eval: impl FnMut(f64) -> Result<Point>,
) -> Result<(Option<(Point, f64)>, usize)> {
    const TRIALS: usize = 40;
    if s_max <= 2.0 * alpha {
        return Ok((None, 0));
    }
    let mut lo = (0.0, 1.0);
    let mut hi: Option<(f64, f64)> = None;
    let mut short: Option<(Point, f64)> = None;
    let mut best: Option<(Point, f64)> = None;
    // Side the last trial moved, for the Illinois correction.
    let mut moved_lo = None;
    let mut s = s_max;
    let mut used = 0;
    while used < TRIALS.min(budget) {
        let trial = eval(s)?;
        used += 1;
        if trial.residual <= 0.5 * cur.residual {
            return Ok((Some((trial, s)), used));
        }
        let g = forward_ratio(&trial.step, &cur.step);
        let off = trial.step.iter().zip(&cur.step).fold(0.0, |m: f64, (a, b)| m.max((a - g * b).abs()));
        if g > 0.5 && g <= 2.0 && off <= 0.5 * cur.residual {
            if moved_lo == Some(true) {
                if let Some(h) = hi.as_mut() {
                    h.1 *= 0.5;
                }
            }
            lo = (s, g);
            moved_lo = Some(true);
            short = Some((trial, s));
        } else {
            if moved_lo == Some(false) {
                lo.1 *= 0.5;
            }
            hi = Some((s, g));
            moved_lo = Some(false);
            if trial.residual < cur.residual && best.as_ref().is_none_or(|(b, _)| trial.residual < b.residual) {
                best = Some((trial, s));
            }
        }
        let Some((sh, gh)) = hi else { break };
        if sh - lo.0 <= 2.0 * alpha {
            break;
        }
        s = if gh < 0.0 {
            lo.0 + (sh - lo.0) * lo.1 / (lo.1 - gh)
        } else {
            0.5 * (lo.0 + sh)
        }
        .max(lo.0 + 2.0 * alpha);
    }
    Ok((short.or(best), used))
}

/// Finds `λ̄ = Λ(λ̄)` by relaxed Picard iteration, `λ ← λ + α(Λ(λ) − λ)`.
///
/// Stops when `‖Λ(λ) − λ‖∞ ≤ tol` at the current iterate, which is returned
/// together with its run; `iterations` counts evaluations of `Λ`. Two
/// safeguards, neither of which changes the set of fixed points:
///
/// - if the residual has not dropped over ten iterations, `α` falls to 0.5;
/// - when consecutive residuals point the same way and shrink slowly (or not
///   at all, as where `Λ` acts as a translation), the solver tries the step
///   that a linear fit along that direction predicts, clipped to the unit
///   box, then narrows it down to where the drift along that direction stops.
pub fn solve_fixed_point(
    fleet: &Fleet,
    demand: &DemandProfile,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidParams("max_iter must be at least 1".into()));
    }
    let n = fleet.len();
    let mu = fleet.off_window_measures();
    let start = match &opts.warm_start {
        Some(w) => {
            check_dim(n, w.len())?;
            LambdaVector(
                w.iter()
                    .zip(&mu)
                    .map(|(&l, &m)| if m > 0.0 { l.clamp(0.0, 1.0) } else { 0.0 })
                    .collect(),
            )
        }
        None => LambdaVector::zeros(n),
    };
    let mut alpha = opts.damping.clamp(f64::MIN_POSITIVE, 1.0);
    let mut history: Vec<f64> = Vec::new();
    let mut cur = point(start, fleet, demand, &mu)?;
    let mut evaluations = 1;
    let mut best = (cur.residual, cur.lambda.clone());
    // Residual and step length that led to `cur`.
    let mut last: Option<(Vec<f64>, f64)> = None;

    loop {
        if cur.residual <= opts.tol {
            let d_tilde = augmented_demand(&cur.trajectory, fleet)?;
            return Ok(FixedPointResult {
                lambda_bar: cur.lambda,
                x_tilde0: cur.x_tilde0,
                d_tilde,
                iterations: evaluations,
                residual: cur.residual,
                damping: alpha,
                trajectory: cur.trajectory,
            });
        }
        if evaluations >= opts.max_iter {
            break;
        }
        history.push(cur.residual);
        if alpha > FALLBACK_DAMPING
            && history.len() > STALL_WINDOW
            && cur.residual >= history[history.len() - 1 - STALL_WINDOW]
        {
            alpha = FALLBACK_DAMPING;
        }

        let mut next = None;
        if let Some((prev, taken)) = &last {
            if let Some(q) = parallel_ratio(&cur.step, prev).filter(|q| *q > 0.5 && *q <= 1.0 + 1e-9) {
                let linear = if q < 1.0 - 1e-12 { taken / (1.0 - q) } else { f64::INFINITY };
                let s_max = linear.min(box_step(&cur.lambda, &cur.step));
                let budget = opts.max_iter - evaluations;
                let (found, used) = line_search(&cur, s_max, alpha, budget, |s| {
                    let trial = point(moved(&cur.lambda, &cur.step, s), fleet, demand, &mu)?;
                    if trial.residual < best.0 {
                        best = (trial.residual, trial.lambda.clone());
                    }
                    Ok(trial)
                })?;
                evaluations += used;
                next = found;
            }
        }
        let (p, taken) = match next {
            Some(found) => found,
            None if evaluations < opts.max_iter => {
                let p = point(moved(&cur.lambda, &cur.step, alpha), fleet, demand, &mu)?;
                evaluations += 1;
                (p, alpha)
            }
            None => break,
        };
        if p.residual < best.0 {
            best = (p.residual, p.lambda.clone());
        }
        let old = std::mem::replace(&mut cur, p);
        last = Some((old.step, taken));
    }
    Err(Error::NonConvergence {
        iterations: evaluations,
        residual: best.0,
        best_lambda: best.1 .0,
    })
}
