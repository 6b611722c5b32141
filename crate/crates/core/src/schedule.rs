use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ggddf::{write_state_rate_csv, Trajectory};
use crate::model::{check_dim, DemandProfile, Fleet};

/// Default slack for schedule checks, in kW·h or h depending on the check.
pub const SCHEDULE_TOL: f64 = 1e-9;

/// Piecewise-constant per-device discharge rates.
///
/// `rates[k][j]` is device `j`'s power (kW) on `[breakpoints[k], breakpoints[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSchedule {
    pub breakpoints: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
}

/// Merges two sorted grids, dropping points closer than `1e-12` to the last kept one.
pub(crate) fn merge_grids(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for t in all {
        if out.last().is_none_or(|&l| t - l > 1e-12) {
            out.push(t);
        }
    }
    out
}

impl DispatchSchedule {
    pub fn new(breakpoints: Vec<f64>, rates: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 || rates.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidDemand(format!(
                "schedule needs one rate row per segment, got {} breakpoints and {} rows",
                breakpoints.len(),
                rates.len()
            )));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) || !breakpoints.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidDemand("schedule breakpoints must start at 0 and increase".into()));
        }
        let n = rates[0].len();
        for row in &rates {
            check_dim(n, row.len())?;
            if row.iter().any(|u| !u.is_finite() || *u < 0.0) {
                return Err(Error::InvalidDemand("schedule rates must be finite and nonnegative".into()));
            }
        }
        Ok(Self { breakpoints, rates })
    }

    /// All devices idle on `[0, horizon]`.
    pub fn zero(n: usize, horizon: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon], vec![vec![0.0; n]])
    }

    /// Equal-width slots; `rates[k]` holds the power on slot `k`.
    pub fn from_slots(slot_width: f64, rates: Vec<Vec<f64>>) -> Result<Self> {
        let breakpoints = (0..=rates.len()).map(|k| k as f64 * slot_width).collect();
        Self::new(breakpoints, rates)
    }

    /// Policy rates of `traj` with every device silenced outside its availability set.
    pub fn restricted_from(traj: &Trajectory, fleet: &Fleet) -> Result<Self> {
        check_dim(fleet.len(), traj.initial_state().len())?;
        let rates = traj
            .segments()
            .map(|(a, b, r)| {
                let mid = 0.5 * (a + b);
                fleet
                    .devices()
                    .iter()
                    .zip(r.iter())
                    .map(|(dev, &u)| if dev.availability.contains(mid) { u } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(traj.event_times.clone(), rates)
    }

    pub fn num_devices(&self) -> usize {
        self.rates[0].len()
    }

    pub fn horizon_end(&self) -> f64 {
        *self.breakpoints.last().expect("schedule has breakpoints")
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.rates)
            .map(|(w, r)| (w[0], w[1], r.as_slice()))
    }

    /// Rates in force at `t` (right-continuous, the last segment covers the end point).
    pub fn rates_at(&self, t: f64) -> &[f64] {
        let k = self.breakpoints.partition_point(|&s| s <= t).clamp(1, self.rates.len());
        &self.rates[k - 1]
    }

    /// Energy (kWh) delivered by each device.
    pub fn delivered_energy(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.num_devices()];
        for (a, b, r) in self.segments() {
            for (e, u) in e.iter_mut().zip(r) {
                *e += u * (b - a);
            }
        }
        e
    }

    /// Total power on each segment.
    pub fn total_power(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r.iter().sum()).collect()
    }

    fn check_horizon(&self, demand: &DemandProfile) -> Result<()> {
        let (h, hd) = (self.horizon_end(), demand.horizon_end());
        if (h - hd).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::HorizonMismatch(format!("schedule ends at {h}, demand at {hd}")));
        }
        Ok(())
    }

    /// `(start, end, rates, demand)` on the common refinement with `demand`.
    fn with_demand<'a>(&'a self, demand: &'a DemandProfile) -> impl Iterator<Item = (f64, f64, &'a [f64], f64)> + 'a {
        let grid = merge_grids(&self.breakpoints, demand.breakpoints());
        let end = self.horizon_end().min(demand.horizon_end());
        let spans: Vec<(f64, f64)> = grid
            .windows(2)
            .filter(|w| w[0] < end)
            .map(|w| (w[0], w[1].min(end)))
            .collect();
        spans.into_iter().map(move |(a, b)| {
            let mid = 0.5 * (a + b);
            (a, b, self.rates_at(mid), demand.value_at(mid))
        })
    }

    /// `∫ max(d − Σ_j u_j, 0) dt`, integrated exactly.
    pub fn unserved(&self, demand: &DemandProfile) -> Result<f64> {
        self.check_horizon(demand)?;
        Ok(self
            .with_demand(demand)
            .map(|(a, b, r, d)| (d - r.iter().sum::<f64>()).max(0.0) * (b - a))
            .sum())
    }

    /// Lists every violated constraint. Demand matching is only checked when
    /// `require_demand_match` is set.
    pub fn violations(&self, fleet: &Fleet, demand: &DemandProfile, require_demand_match: bool, tol: f64) -> Result<Vec<String>> {
        check_dim(fleet.len(), self.num_devices())?;
        self.check_horizon(demand)?;
        let mut out = Vec::new();
        let devices = fleet.devices();
        for (a, b, r) in self.segments() {
            for (j, (dev, &u)) in devices.iter().zip(r).enumerate() {
                if u > dev.rated_power + tol {
                    out.push(format!("device {j} exceeds rated power on [{a}, {b}]: {u}"));
                }
                if u > 0.0 {
                    let off = (b - a) - dev.availability.measure_between(a, b);
                    if u * off > tol {
                        out.push(format!("device {j} delivers {} kWh outside its window on [{a}, {b}]", u * off));
                    }
                }
            }
        }
        for (j, (dev, e)) in devices.iter().zip(self.delivered_energy()).enumerate() {
            if e > dev.initial_energy + tol {
                out.push(format!("device {j} delivers {e} kWh but stores {}", dev.initial_energy));
            }
        }
        if require_demand_match {
            for (a, b, r, d) in self.with_demand(demand) {
                let s: f64 = r.iter().sum();
                if (s - d).abs() > tol * (1.0 + d) {
                    out.push(format!("power {s} differs from demand {d} on [{a}, {b}]"));
                }
            }
        }
        Ok(out)
    }

    /// Errors with the first violation, if any.
    pub fn verify(&self, fleet: &Fleet, demand: &DemandProfile, require_demand_match: bool, tol: f64) -> Result<()> {
        match self.violations(fleet, demand, require_demand_match, tol)?.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::ScheduleViolation(v)),
        }
    }

    /// Stored energy of every device at each breakpoint.
    pub fn energy_path(&self, fleet: &Fleet) -> Vec<Vec<f64>> {
        let mut e = fleet.initial_energies();
        let mut out = vec![e.clone()];
        for (a, b, r) in self.segments() {
            for (e, u) in e.iter_mut().zip(r) {
                *e -= u * (b - a);
            }
            out.push(e.clone());
        }
        out
    }

    /// Stops each device at the instant its stored energy runs out.
    ///
    /// Segments are split at depletion instants, so the result never draws
    /// more than the initial energy.
    pub fn clip_to_budget(&self, fleet: &Fleet) -> Result<Self> {
        check_dim(fleet.len(), self.num_devices())?;
        let mut energy = fleet.initial_energies();
        let mut bps = vec![0.0];
        let mut rates = Vec::with_capacity(self.rates.len());
        for (a, b, r) in self.segments() {
            let mut t = a;
            let mut row: Vec<f64> = r
                .iter()
                .zip(&energy)
                .map(|(&u, &e)| if e <= 0.0 { 0.0 } else { u })
                .collect();
            loop {
                let mut next = b;
                for (&u, &e) in row.iter().zip(&energy) {
                    if u > 0.0 && t + e / u < next {
                        next = t + e / u;
                    }
                }
                let len = next - t;
                for (e, &u) in energy.iter_mut().zip(&row) {
                    *e = if u > 0.0 && t + *e / u <= next { 0.0 } else { *e - u * len };
                }
                if next > t {
                    bps.push(next);
                    rates.push(row.clone());
                }
                t = next;
                if t >= b {
                    break;
                }
                for (u, &e) in row.iter_mut().zip(&energy) {
                    if e <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
        }
        Self::new(bps, rates)
    }

    /// First time the schedule either overdraws a device or falls short of
    /// demand by more than `tol`; the horizon end when neither happens.
    pub fn time_to_failure(&self, fleet: &Fleet, demand: &DemandProfile, tol: f64) -> Result<f64> {
        check_dim(fleet.len(), self.num_devices())?;
        self.check_horizon(demand)?;
        let mut energy = fleet.initial_energies();
        if energy.iter().any(|&e| e < -tol) {
            return Ok(0.0);
        }
        for (a, b, r, d) in self.with_demand(demand) {
            if d - r.iter().sum::<f64>() > tol * (1.0 + d) {
                return Ok(a);
            }
            let mut fail = f64::INFINITY;
            for (e, &u) in energy.iter_mut().zip(r) {
                let after = *e - u * (b - a);
                if after < -tol && u > 0.0 {
                    fail = fail.min(a + e.max(0.0) / u);
                }
                *e = after;
            }
            if fail.is_finite() {
                return Ok(fail);
            }
        }
        Ok(self.horizon_end())
    }

    /// Keeps `[0, end]`.
    pub fn truncate(&self, end: f64) -> Result<Self> {
        let k = self.breakpoints.partition_point(|&t| t < end).max(1);
        let mut bps = self.breakpoints[..k].to_vec();
        bps.push(end);
        Self::new(bps, self.rates[..k].to_vec())
    }

    /// Same CSV layout as a trajectory: time-to-discharge from integrating
    /// the schedule, rates, and unserved power per segment.
    pub fn write_csv<W: Write>(&self, out: W, fleet: &Fleet, demand: &DemandProfile) -> Result<()> {
        check_dim(fleet.len(), self.num_devices())?;
        self.check_horizon(demand)?;
        let p = fleet.rated_powers();
        let grid: Vec<(f64, f64, &[f64], f64)> = self.with_demand(demand).collect();
        let mut e = fleet.initial_energies();
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(grid.len() + 1);
        let ttd = |e: &[f64]| e.iter().zip(&p).map(|(e, p)| e / p).collect::<Vec<_>>();
        x.push(ttd(&e));
        for (a, b, r, _) in &grid {
            for (e, u) in e.iter_mut().zip(r.iter()) {
                *e -= u * (b - a);
            }
            x.push(ttd(&e));
        }
        let short: Vec<f64> = grid.iter().map(|(_, _, r, d)| (d - r.iter().sum::<f64>()).max(0.0)).collect();
        let times: Vec<f64> = grid.iter().map(|g| g.0).chain(std::iter::once(self.horizon_end())).collect();
        write_state_rate_csv(
            out,
            fleet.len(),
            times.iter().enumerate().map(|(k, &t)| {
                (t, x[k].as_slice(), grid.get(k).map(|g| (g.2, short[k])))
            }),
        )?;
        Ok(())
    }
}
