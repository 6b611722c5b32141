//! Fleet domain types: devices, availability sets, demand profiles and the
//! time-to-discharge coordinates the dispatch policy works in.
//!
//! Units are fixed throughout the crate: time in hours, power in kW and
//! energy in kWh. A device's time-to-discharge `x = E / P̄` is therefore the
//! number of hours it can sustain full-rate discharge.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance (hours) under which two time-to-discharge values are
/// considered equal when grouping devices.
pub const GROUP_TOL: f64 = 1e-9;

/// A closed time interval `[start, end]` with positive length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || start >= end {
            return Err(Error::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }

    /// Length of the overlap with `[a, b]`.
    pub fn overlap(&self, a: f64, b: f64) -> f64 {
        (self.end.min(b) - self.start.max(a)).max(0.0)
    }
}

/// A finite union of disjoint closed intervals, kept sorted with positive
/// gaps between consecutive intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<[f64; 2]>", try_from = "Vec<[f64; 2]>")]
pub struct AvailabilitySet {
    intervals: Vec<Interval>,
}

impl AvailabilitySet {
    /// Builds a set from arbitrary intervals, sorting them and merging any
    /// that overlap or touch.
    pub fn new(mut intervals: Vec<Interval>) -> Self {
        intervals.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
                _ => merged.push(iv),
            }
        }
        Self { intervals: merged }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let intervals = pairs
            .iter()
            .map(|&(s, e)| Interval::new(s, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(intervals))
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(start: f64, end: f64) -> Result<Self> {
        Ok(Self {
            intervals: vec![Interval::new(start, end)?],
        })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(t))
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(Interval::length).sum()
    }

    /// Measure of the intersection with `[a, b]`.
    pub fn measure_between(&self, a: f64, b: f64) -> f64 {
        self.intervals.iter().map(|iv| iv.overlap(a, b)).sum()
    }

    /// The closure of `window \ self`.
    pub fn complement_within(&self, window: &Interval) -> Self {
        let mut gaps = Vec::new();
        let mut cursor = window.start;
        for iv in &self.intervals {
            if iv.end <= window.start || iv.start >= window.end {
                continue;
            }
            if iv.start > cursor {
                gaps.push(Interval {
                    start: cursor,
                    end: iv.start,
                });
            }
            cursor = cursor.max(iv.end);
        }
        if cursor < window.end {
            gaps.push(Interval {
                start: cursor,
                end: window.end,
            });
        }
        Self { intervals: gaps }
    }

    /// Intersection with `[0, end]`, dropping pieces that collapse to a point.
    pub fn truncate(&self, end: f64) -> Self {
        let intervals = self
            .intervals
            .iter()
            .filter(|iv| iv.start < end)
            .map(|iv| Interval {
                start: iv.start,
                end: iv.end.min(end),
            })
            .collect();
        Self { intervals }
    }

    pub fn endpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().flat_map(|iv| [iv.start, iv.end])
    }
}

impl From<AvailabilitySet> for Vec<[f64; 2]> {
    fn from(set: AvailabilitySet) -> Self {
        set.intervals.iter().map(|iv| [iv.start, iv.end]).collect()
    }
}

impl TryFrom<Vec<[f64; 2]>> for AvailabilitySet {
    type Error = Error;

    fn try_from(pairs: Vec<[f64; 2]>) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|[s, e]| (s, e)).collect();
        Self::from_pairs(&pairs)
    }
}

/// Lebesgue measure of `availability ∩ window`.
pub fn measure_intersection(availability: &AvailabilitySet, window: &Interval) -> f64 {
    availability.measure_between(window.start, window.end)
}

/// A storage device. `initial_energy` is externally measured, i.e. already
/// scaled by the round-trip efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub rated_power: f64,
    pub initial_energy: f64,
    pub efficiency: f64,
    pub availability: AvailabilitySet,
}

impl Device {
    /// A unit-efficiency device whose stored energy is `initial_energy` kWh.
    pub fn new(
        id: impl Into<String>,
        rated_power: f64,
        initial_energy: f64,
        availability: AvailabilitySet,
    ) -> Result<Self> {
        Self::with_internal_energy(id, rated_power, initial_energy, 1.0, availability)
    }

    /// Builds a device from internally measured energy, converting it to the
    /// external value the dispatch algorithms use.
    pub fn with_internal_energy(
        id: impl Into<String>,
        rated_power: f64,
        internal_energy: f64,
        efficiency: f64,
        availability: AvailabilitySet,
    ) -> Result<Self> {
        let id = id.into();
        if !(rated_power.is_finite() && rated_power > 0.0) {
            return Err(Error::InvalidDevice {
                id,
                reason: format!("rated power must be positive, got {rated_power}"),
            });
        }
        if !(internal_energy.is_finite() && internal_energy >= 0.0) {
            return Err(Error::InvalidDevice {
                id,
                reason: format!("initial energy must be nonnegative, got {internal_energy}"),
            });
        }
        let initial_energy = external_energy(internal_energy, efficiency)?;
        Ok(Self {
            id,
            rated_power,
            initial_energy,
            efficiency,
            availability,
        })
    }

    pub fn time_to_discharge(&self) -> f64 {
        self.initial_energy / self.rated_power
    }
}

/// Converts internally measured energy to external energy, `η · Ẽ`.
pub fn external_energy(internal_energy: f64, efficiency: f64) -> Result<f64> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::EfficiencyOutOfRange(efficiency));
    }
    Ok(efficiency * internal_energy)
}

/// A nonempty collection of devices sharing the horizon `[0, τ̄]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    devices: Vec<Device>,
    horizon: Interval,
}

impl Fleet {
    pub fn new(devices: Vec<Device>, horizon_end: f64) -> Result<Self> {
        let horizon = Interval::new(0.0, horizon_end)?;
        if devices.is_empty() {
            return Err(Error::InvalidFleet("fleet has no devices".into()));
        }
        for d in &devices {
            if let Some(iv) = d.availability.intervals().last() {
                if iv.end > horizon_end {
                    return Err(Error::InvalidFleet(format!(
                        "availability of `{}` ends at {} beyond horizon {horizon_end}",
                        d.id, iv.end
                    )));
                }
            }
        }
        Ok(Self { devices, horizon })
    }

    pub fn devices(&self) -> &[Device] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn horizon(&self) -> Interval {
        self.horizon
    }

    pub fn horizon_end(&self) -> f64 {
        self.horizon.end
    }

    pub fn rated_powers(&self) -> Vec<f64> {
        self.devices.iter().map(|d| d.rated_power).collect()
    }

    pub fn initial_energies(&self) -> Vec<f64> {
        self.devices.iter().map(|d| d.initial_energy).collect()
    }

    pub fn initial_state(&self) -> StateVector {
        StateVector(self.devices.iter().map(Device::time_to_discharge).collect())
    }

    /// `μ(T \ A_i)` for every device.
    pub fn off_window_measures(&self) -> Vec<f64> {
        self.devices
            .iter()
            .map(|d| self.horizon.length() - measure_intersection(&d.availability, &self.horizon))
            .collect()
    }

    /// Maximum number of endpoints of any device's off-window set.
    pub fn max_off_window_endpoints(&self) -> usize {
        self.devices
            .iter()
            .map(|d| 2 * d.availability.complement_within(&self.horizon).intervals().len())
            .max()
            .unwrap_or(0)
    }

    /// The same fleet on `[0, end]`, with availability sets intersected.
    pub fn truncate(&self, end: f64) -> Result<Self> {
        let devices = self
            .devices
            .iter()
            .map(|d| Device {
                availability: d.availability.truncate(end),
                ..d.clone()
            })
            .collect();
        Self::new(devices, end)
    }

    /// The same fleet with every device's energy replaced by `energies`.
    pub fn with_energies(&self, energies: &[f64]) -> Result<Self> {
        check_dim(self.len(), energies.len())?;
        let devices = self
            .devices
            .iter()
            .zip(energies)
            .map(|(d, &e)| Device {
                initial_energy: e,
                ..d.clone()
            })
            .collect();
        Ok(Self {
            devices,
            horizon: self.horizon,
        })
    }
}

/// Piecewise-constant nonnegative power demand on `[t_0, t_M)` segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl DemandProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 || values.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidDemand(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidDemand("first breakpoint must be 0".into()));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDemand(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidDemand(format!(
                "values must be finite and nonnegative, got {v}"
            )));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(horizon_end: f64, value: f64) -> Result<Self> {
        Self::new(vec![0.0, horizon_end], vec![value])
    }

    /// A profile on equal slots of width `slot_width`.
    pub fn from_slots(slot_width: f64, values: Vec<f64>) -> Result<Self> {
        let breakpoints = (0..=values.len()).map(|k| k as f64 * slot_width).collect();
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon_end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// `(start, end, value)` for each segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    /// Value on the segment containing `t` (right-continuous; the final
    /// breakpoint maps to the last segment).
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.clamp(1, self.values.len()) - 1]
    }

    pub fn energy(&self) -> f64 {
        self.segments().map(|(a, b, v)| (b - a) * v).sum()
    }

    pub fn energy_between(&self, a: f64, b: f64) -> f64 {
        self.segments()
            .map(|(s, e, v)| (e.min(b) - s.max(a)).max(0.0) * v)
            .sum()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// The profile on `[0, end]`, dropping the tail.
    pub fn truncate(&self, end: f64) -> Result<Self> {
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        for (a, _, v) in self.segments() {
            if a >= end {
                break;
            }
            breakpoints.push(a);
            values.push(v);
        }
        breakpoints.push(end);
        Self::new(breakpoints, values)
    }

    /// Merges adjacent segments with equal values.
    pub fn simplified(&self) -> Self {
        let mut breakpoints = vec![self.breakpoints[0]];
        let mut values: Vec<f64> = Vec::new();
        for (_, b, v) in self.segments() {
            if values.last() == Some(&v) {
                *breakpoints.last_mut().unwrap() = b;
            } else {
                values.push(v);
                breakpoints.push(b);
            }
        }
        Self { breakpoints, values }
    }
}

/// Per-device time-to-discharge in hours.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// `x_i = E_i / P̄_i`.
pub fn to_time_to_discharge(energy: &[f64], fleet: &Fleet) -> Result<StateVector> {
    check_dim(fleet.len(), energy.len())?;
    Ok(StateVector(
        energy
            .iter()
            .zip(fleet.devices())
            .map(|(e, d)| e / d.rated_power)
            .collect(),
    ))
}

/// `E_i = x_i · P̄_i`.
pub fn from_time_to_discharge(x: &StateVector, fleet: &Fleet) -> Result<Vec<f64>> {
    check_dim(fleet.len(), x.len())?;
    Ok(x.iter()
        .zip(fleet.devices())
        .map(|(x, d)| x * d.rated_power)
        .collect())
}

/// A set of devices sharing (up to tolerance) the same time-to-discharge.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub tau: f64,
    pub members: Vec<usize>,
}

/// Partitions devices by time-to-discharge, ordered by strictly decreasing
/// `tau`. Values within `tol` of a neighbour are chained into one group, so
/// grouping is the transitive closure of the tolerance relation. Each
/// group's `tau` is its largest member value.
pub fn group_partition(x: &[f64], tol: f64) -> Vec<Group> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut groups: Vec<Group> = Vec::new();
    let mut prev = f64::NAN;
    for i in order {
        match groups.last_mut() {
            Some(g) if prev - x[i] <= tol => g.members.push(i),
            _ => groups.push(Group {
                tau: x[i],
                members: vec![i],
            }),
        }
        prev = x[i];
    }
    groups
}
