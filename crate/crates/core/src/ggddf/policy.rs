use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::model::{group_partition, Fleet, StateVector, GROUP_TOL};

/// Per-device discharge power in kW.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateVector(pub Vec<f64>);

impl Deref for RateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Policy output at one instant: the rate vector plus demand that the
/// available capacity could not cover.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDispatch {
    pub rates: RateVector,
    pub shortfall: f64,
}

/// Fraction of rated power assigned to each priority group.
///
/// `available` holds each group's available capacity in decreasing
/// time-to-discharge order. Groups are served in order while unmet demand
/// remains; a group whose cumulative capacity fits runs at full power (all
/// members, available or not), the first group that overshoots runs at the
/// proportional fraction and everything after it idles. A group with no
/// available capacity therefore runs at full power only while demand is still
/// unmet when its turn comes. Returns the power served from available capacity.
pub(crate) fn group_fractions(available: &[f64], demand: f64, fractions: &mut Vec<f64>) -> f64 {
    fractions.clear();
    let eps = 1e-12 * (1.0 + demand);
    let mut served = 0.0;
    for &cap in available {
        let frac = if served < demand - eps {
            if served + cap <= demand + eps {
                served += cap;
                1.0
            } else {
                let r = (demand - served) / cap;
                served = demand;
                r
            }
        } else {
            0.0
        };
        fractions.push(frac);
    }
    served
}

/// Evaluates the greedy greatest-discharge-duration-first policy at time `t`.
///
/// With `availability_aware` the cumulative capacities only count devices
/// available at `t` (unavailable members of a selected group still run, so
/// the policy may draw power outside a device's window). Otherwise every
/// device counts. Demand beyond the counted capacity saturates every device
/// at rated power and is reported as `shortfall`.
pub fn policy_rates(
    t: f64,
    x: &StateVector,
    demand: f64,
    fleet: &Fleet,
    availability_aware: bool,
) -> PolicyDispatch {
    let devices = fleet.devices();
    let groups = group_partition(x, GROUP_TOL);
    let available: Vec<f64> = groups
        .iter()
        .map(|g| {
            g.members
                .iter()
                .filter(|&&i| !availability_aware || devices[i].availability.contains(t))
                .map(|&i| devices[i].rated_power)
                .sum()
        })
        .collect();
    let mut fractions = Vec::with_capacity(groups.len());
    let served = group_fractions(&available, demand, &mut fractions);
    let mut rates = vec![0.0; devices.len()];
    for (g, frac) in groups.iter().zip(&fractions) {
        for &i in &g.members {
            rates[i] = frac * devices[i].rated_power;
        }
    }
    PolicyDispatch {
        rates: RateVector(rates),
        shortfall: (demand - served).max(0.0),
    }
}

/// `d(t)` plus the power the availability-aware policy draws from devices
/// that are unavailable at `t`.
pub fn augmented_demand_pointwise(t: f64, x: &StateVector, demand: f64, fleet: &Fleet) -> f64 {
    let dispatch = policy_rates(t, x, demand, fleet, true);
    demand
        + fleet
            .devices()
            .iter()
            .zip(dispatch.rates.iter())
            .filter(|(d, _)| !d.availability.contains(t))
            .map(|(_, u)| u)
            .sum::<f64>()
}
