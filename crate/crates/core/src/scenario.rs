//! Scenario files, seeded fleet generation and built-in fixtures.
//!
//! A scenario is JSON of the form
//!
//! ```json
//! {
//!   "horizon_hours": 12.0,
//!   "devices": [
//!     {"id": "1", "rated_power_kw": 1.0, "initial_energy_kwh": 3.0,
//!      "efficiency": 1.0, "availability": [[0.0, 5.0]]}
//!   ],
//!   "demand": {"breakpoints": [0.0, 12.0], "values_kw": [0.25]},
//!   "meta": {"seed": null, "note": ""}
//! }
//! ```
//!
//! `initial_energy_kwh` is internally measured; the fleet sees
//! `efficiency · initial_energy_kwh`. Instead of `devices` a scenario may give
//! a `generator` block, in which case the fleet is drawn from it.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::LambdaVector;
use crate::model::{AvailabilitySet, DemandProfile, Device, Fleet, Interval, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: String,
    pub rated_power_kw: f64,
    pub initial_energy_kwh: f64,
    #[serde(default = "unit_efficiency")]
    pub efficiency: f64,
    pub availability: Vec<[f64; 2]>,
}

fn unit_efficiency() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    pub breakpoints: Vec<f64>,
    pub values_kw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: FleetParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub horizon_hours: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub devices: Vec<DeviceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    pub demand: DemandSpec,
    #[serde(default)]
    pub meta: Meta,
}

impl ScenarioSpec {
    /// Describes an existing fleet and demand.
    pub fn from_parts(fleet: &Fleet, demand: &DemandProfile, meta: Meta) -> Self {
        let devices = fleet
            .devices()
            .iter()
            .map(|d| DeviceSpec {
                id: d.id.clone(),
                rated_power_kw: d.rated_power,
                initial_energy_kwh: if d.efficiency == 1.0 { d.initial_energy } else { d.initial_energy / d.efficiency },
                efficiency: d.efficiency,
                availability: d.availability.intervals().iter().map(|iv| [iv.start, iv.end]).collect(),
            })
            .collect();
        Self {
            horizon_hours: fleet.horizon_end(),
            devices,
            generator: None,
            demand: DemandSpec {
                breakpoints: demand.breakpoints().to_vec(),
                values_kw: demand.values().to_vec(),
            },
            meta,
        }
    }

    pub fn fleet(&self) -> Result<Fleet> {
        match (&self.generator, self.devices.is_empty()) {
            (Some(g), true) => {
                let params = FleetParams { horizon: self.horizon_hours, ..g.params.clone() };
                generate_fleet(g.n, &params, g.seed)
            }
            (None, false) => {
                let devices = self
                    .devices
                    .iter()
                    .map(|d| {
                        let intervals = d
                            .availability
                            .iter()
                            .map(|&[a, b]| Interval::new(a, b))
                            .collect::<Result<Vec<_>>>()?;
                        Device::with_internal_energy(
                            d.id.clone(),
                            d.rated_power_kw,
                            d.initial_energy_kwh,
                            d.efficiency,
                            AvailabilitySet::new(intervals),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Fleet::new(devices, self.horizon_hours)
            }
            _ => Err(Error::Schema {
                path: ".".into(),
                message: "exactly one of `devices` and `generator` must be given".into(),
            }),
        }
    }

    pub fn demand(&self) -> Result<DemandProfile> {
        DemandProfile::new(self.demand.breakpoints.clone(), self.demand.values_kw.clone())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    ScenarioSpec::from_json(&fs::read_to_string(path)?)
}

pub fn save_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, spec.to_json() + "\n")?;
    Ok(())
}

/// Distributions for [`generate_fleet`]. Times are hours from the start of
/// the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetParams {
    pub energy_mean: f64,
    pub energy_std: f64,
    pub window_start_mean: f64,
    pub window_start_std: f64,
    pub window_len_mean: f64,
    pub window_len_std: f64,
    pub rated_power: f64,
    pub horizon: f64,
}

impl Default for FleetParams {
    /// Noon-to-noon day: 8 ± 1.5 kWh, windows opening at 18:00 ± 1 h and
    /// lasting 10 ± 2 h, 1 kW devices.
    fn default() -> Self {
        Self {
            energy_mean: 8.0,
            energy_std: 1.5,
            window_start_mean: 6.0,
            window_start_std: 1.0,
            window_len_mean: 10.0,
            window_len_std: 2.0,
            rated_power: 1.0,
            horizon: 24.0,
        }
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("validated parameters")
}

/// Draws `n` devices. Device `j` uses stream `j` of a ChaCha8 generator keyed
/// by `seed`, so any device can be reproduced on its own. Energies are
/// truncated at zero; window start and length are rounded to whole hours and
/// clipped to the horizon. A window that rounds to nothing leaves the device
/// unavailable.
pub fn generate_fleet(n: usize, params: &FleetParams, seed: u64) -> Result<Fleet> {
    let p = params;
    if n == 0 {
        return Err(Error::InvalidParams("fleet size must be at least 1".into()));
    }
    let all = [
        p.energy_mean,
        p.energy_std,
        p.window_start_mean,
        p.window_start_std,
        p.window_len_mean,
        p.window_len_std,
        p.rated_power,
        p.horizon,
    ];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("parameters must be finite".into()));
    }
    if p.energy_std < 0.0 || p.window_start_std < 0.0 || p.window_len_std < 0.0 {
        return Err(Error::InvalidParams("standard deviations must be nonnegative".into()));
    }
    if p.rated_power <= 0.0 || p.horizon <= 0.0 {
        return Err(Error::InvalidParams("rated power and horizon must be positive".into()));
    }
    if p.energy_mean <= 0.0 || p.window_len_mean <= 0.0 {
        return Err(Error::InvalidParams(
            "mean energy and mean window length must be positive, or truncation leaves an empty fleet".into(),
        ));
    }
    let devices = (0..n)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let energy = normal(p.energy_mean, p.energy_std).sample(&mut rng).max(0.0);
            let start = normal(p.window_start_mean, p.window_start_std).sample(&mut rng).round();
            let len = normal(p.window_len_mean, p.window_len_std).sample(&mut rng).round();
            let (a, b) = (start.clamp(0.0, p.horizon), (start + len).clamp(0.0, p.horizon));
            let availability = if b > a { AvailabilitySet::single(a, b)? } else { AvailabilitySet::empty() };
            Device::new(format!("ev{j}"), p.rated_power, energy, availability)
        })
        .collect::<Result<Vec<_>>>()?;
    Fleet::new(devices, p.horizon)
}

/// Shape of [`sample_demand`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandParams {
    /// Demand is zero outside `[start, end]`.
    pub start: f64,
    pub end: f64,
    pub slot_width: f64,
    /// Target total energy as a fraction of the fleet's stored energy.
    pub energy_fraction: f64,
    /// Relative slot-to-slot noise in `[0, 1)`.
    pub jitter: f64,
}

impl Default for DemandParams {
    /// Demand from 16:00 to 11:00 on a noon-to-noon day, hourly, asking for
    /// 85% of the stored energy.
    fn default() -> Self {
        Self { start: 4.0, end: 23.0, slot_width: 1.0, energy_fraction: 0.85, jitter: 0.3 }
    }
}

/// Slot demand that follows the fleet's available power, with noise, scaled
/// to the target energy and never above the available power.
pub fn sample_demand(fleet: &Fleet, params: &DemandParams, seed: u64) -> Result<DemandProfile> {
    let p = params;
    let h = fleet.horizon_end();
    if !(p.slot_width > 0.0) || !(0.0..1.0).contains(&p.jitter) || !(p.energy_fraction >= 0.0) {
        return Err(Error::InvalidParams("demand parameters out of range".into()));
    }
    let slots = (h / p.slot_width).round() as usize;
    if slots == 0 || (slots as f64 * p.slot_width - h).abs() > 1e-9 * h {
        return Err(Error::InvalidParams(format!("slot width {} does not divide the horizon {h}", p.slot_width)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mid = |k: usize| (k as f64 + 0.5) * p.slot_width;
    let avail: Vec<f64> = (0..slots)
        .map(|k| {
            fleet
                .devices()
                .iter()
                .filter(|d| d.availability.contains(mid(k)))
                .map(|d| d.rated_power)
                .sum()
        })
        .collect();
    let mut shape: Vec<f64> = (0..slots)
        .map(|k| {
            let noise = 1.0 + p.jitter * (2.0 * rng.random::<f64>() - 1.0);
            if (p.start..p.end).contains(&mid(k)) { avail[k] * noise } else { 0.0 }
        })
        .collect();
    let target = p.energy_fraction * fleet.initial_energies().iter().sum::<f64>();
    for _ in 0..50 {
        let energy: f64 = shape.iter().sum::<f64>() * p.slot_width;
        if energy <= 0.0 || (energy - target).abs() <= 1e-12 * target {
            break;
        }
        let f = target / energy;
        for (s, a) in shape.iter_mut().zip(&avail) {
            *s = (*s * f).min(*a);
        }
    }
    DemandProfile::from_slots(p.slot_width, shape)
}

/// The two-device example with two demand profiles that agree on `[0, 2]`
/// but need different dispatch there.
#[derive(Debug, Clone)]
pub struct CounterexampleFixture {
    pub fleet: Fleet,
    pub d1: DemandProfile,
    pub d2: DemandProfile,
    pub lambda_d1: LambdaVector,
    pub lambda_d2: LambdaVector,
    pub x_tilde_d1: StateVector,
}

pub fn counterexample_fixture() -> CounterexampleFixture {
    let fleet = Fleet::new(
        vec![
            Device::new("1", 1.0, 3.0, AvailabilitySet::single(0.0, 5.0).expect("valid")).expect("valid"),
            Device::new("2", 1.0, 6.0, AvailabilitySet::single(0.0, 12.0).expect("valid")).expect("valid"),
        ],
        12.0,
    )
    .expect("valid fleet");
    CounterexampleFixture {
        fleet,
        d1: DemandProfile::new(vec![0.0, 3.0, 5.0, 11.0, 12.0], vec![1.0, 0.0, 1.0, 0.0]).expect("valid"),
        d2: DemandProfile::new(vec![0.0, 2.0, 5.0, 6.0, 12.0], vec![1.0, 2.0, 1.0, 0.0]).expect("valid"),
        lambda_d1: LambdaVector(vec![6.0 / 7.0, 0.0]),
        lambda_d2: LambdaVector(vec![0.0, 0.0]),
        x_tilde_d1: StateVector(vec![9.0, 6.0]),
    }
}

/// Two 2 kWh devices, one available for the first two hours only, facing
/// 1 kW for ten hours. The latest possible first failure is at 4 h.
pub fn ttf_fixture() -> (Fleet, DemandProfile) {
    let fleet = Fleet::new(
        vec![
            Device::new("1", 1.0, 2.0, AvailabilitySet::single(0.0, 2.0).expect("valid")).expect("valid"),
            Device::new("2", 1.0, 2.0, AvailabilitySet::single(0.0, 10.0).expect("valid")).expect("valid"),
        ],
        10.0,
    )
    .expect("valid fleet");
    (fleet, DemandProfile::constant(10.0, 1.0).expect("valid"))
}

/// A random instance whose breakpoints and windows sit on a unit grid and
/// whose quantities are multiples of 0.5, so the oracle scales exactly.
#[derive(Debug, Clone)]
pub struct AlignedCase {
    pub fleet: Fleet,
    pub demand: DemandProfile,
    pub slot_width: f64,
}

fn halves<R: Rng>(rng: &mut R, max: f64) -> f64 {
    (rng.random_range(0.0..=max) * 2.0).round() / 2.0
}

/// Draws an instance with `1..=max_n` devices on `1..=max_slots` one-hour
/// slots. Demand per slot is a random share (up to 120%) of the power
/// available in it, so both verdicts are common.
pub fn random_aligned_case<R: Rng>(rng: &mut R, max_n: usize, max_slots: usize) -> AlignedCase {
    let n = rng.random_range(1..=max_n.max(1));
    let t = rng.random_range(1..=max_slots.max(1));
    let devices: Vec<Device> = (0..n)
        .map(|j| {
            let p = [0.5, 1.0, 1.5, 2.0][rng.random_range(0..4)];
            let pieces = if t >= 3 && rng.random_bool(0.3) { 2 } else { 1 };
            let mut intervals = Vec::new();
            for _ in 0..pieces {
                let a = rng.random_range(0..t);
                let b = rng.random_range(a + 1..=t);
                intervals.push(Interval::new(a as f64, b as f64).expect("valid"));
            }
            let avail = AvailabilitySet::new(intervals);
            let e = halves(rng, p * avail.measure());
            Device::new(format!("d{j}"), p, e, avail).expect("valid")
        })
        .collect();
    let fleet = Fleet::new(devices, t as f64).expect("valid fleet");
    let values = (0..t)
        .map(|k| {
            let mid = k as f64 + 0.5;
            let cap: f64 = fleet.devices().iter().filter(|d| d.availability.contains(mid)).map(|d| d.rated_power).sum();
            if rng.random_bool(0.2) { 0.0 } else { halves(rng, 1.2 * cap) }
        })
        .collect();
    AlignedCase { fleet, demand: DemandProfile::from_slots(1.0, values).expect("valid"), slot_width: 1.0 }
}
