//! Max-flow ground truth for slot-aligned instances.
//!
//! The network is source → device (stored energy) → (device, slot) (energy the
//! device can deliver in the slot) → slot → sink (slot demand). All capacities
//! are scaled to integers before the flow is computed, so verdicts are exact.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandProfile, Fleet};
use crate::schedule::DispatchSchedule;

/// Energy quantities (kWh) on a grid of equal slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    pub slot_width: f64,
    /// Stored energy per device.
    pub supplies: Vec<f64>,
    /// `caps[j][k]`: most energy device `j` can deliver in slot `k`.
    pub caps: Vec<Vec<f64>>,
    /// Energy demanded in each slot.
    pub demand: Vec<f64>,
}

impl DiscreteInstance {
    pub fn new(slot_width: f64, supplies: Vec<f64>, caps: Vec<Vec<f64>>, demand: Vec<f64>) -> Result<Self> {
        if !(slot_width > 0.0 && slot_width.is_finite()) {
            return Err(Error::InvalidParams(format!("slot width must be positive, got {slot_width}")));
        }
        if caps.len() != supplies.len() {
            return Err(Error::DimensionMismatch { expected: supplies.len(), got: caps.len() });
        }
        for row in &caps {
            if row.len() != demand.len() {
                return Err(Error::DimensionMismatch { expected: demand.len(), got: row.len() });
            }
        }
        let all = supplies.iter().chain(caps.iter().flatten()).chain(&demand);
        if let Some(&bad) = all.into_iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParams(format!("instance quantities must be nonnegative, got {bad}")));
        }
        Ok(Self { slot_width, supplies, caps, demand })
    }

    pub fn num_devices(&self) -> usize {
        self.supplies.len()
    }

    pub fn num_slots(&self) -> usize {
        self.demand.len()
    }

    pub fn total_demand(&self) -> f64 {
        self.demand.iter().sum()
    }

    /// The first `p` slots.
    pub fn prefix(&self, p: usize) -> Self {
        let p = p.min(self.num_slots());
        Self {
            slot_width: self.slot_width,
            supplies: self.supplies.clone(),
            caps: self.caps.iter().map(|r| r[..p].to_vec()).collect(),
            demand: self.demand[..p].to_vec(),
        }
    }
}

fn aligned(value: f64, width: f64) -> Option<usize> {
    let r = value / width;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * r.abs().max(1.0)).then_some(k as usize)
}

/// Slot-samples a fleet and demand. Every demand breakpoint and availability
/// endpoint must sit on the grid.
pub fn discretize(fleet: &Fleet, demand: &DemandProfile, slot_width: f64) -> Result<DiscreteInstance> {
    if !(slot_width > 0.0 && slot_width.is_finite()) {
        return Err(Error::InvalidParams(format!("slot width must be positive, got {slot_width}")));
    }
    let misaligned = |what, value| Error::Misaligned { what, value, slot_width };
    let h = fleet.horizon_end();
    let slots = aligned(h, slot_width).ok_or(misaligned("horizon", h))?;
    if (demand.horizon_end() - h).abs() > 1e-9 * h.max(1.0) {
        return Err(Error::HorizonMismatch(format!("fleet ends at {h}, demand at {}", demand.horizon_end())));
    }
    for &t in demand.breakpoints() {
        aligned(t, slot_width).ok_or(misaligned("demand breakpoint", t))?;
    }
    for dev in fleet.devices() {
        for t in dev.availability.endpoints() {
            aligned(t, slot_width).ok_or(misaligned("availability endpoint", t))?;
        }
    }
    let mid = |k: usize| (k as f64 + 0.5) * slot_width;
    let caps = fleet
        .devices()
        .iter()
        .map(|dev| {
            (0..slots)
                .map(|k| if dev.availability.contains(mid(k)) { dev.rated_power * slot_width } else { 0.0 })
                .collect()
        })
        .collect();
    let d = (0..slots).map(|k| demand.value_at(mid(k)) * slot_width).collect();
    DiscreteInstance::new(slot_width, fleet.initial_energies(), caps, d)
}

fn is_integer(x: f64) -> bool {
    x <= 1e12 && (x - x.round()).abs() <= 1e-6 + 1e-15 * x
}

/// Smallest power of ten that turns every quantity into an integer.
pub(crate) fn integer_scale(inst: &DiscreteInstance) -> Result<f64> {
    let values: Vec<f64> = inst.supplies.iter().chain(inst.caps.iter().flatten()).chain(&inst.demand).copied().collect();
    for exp in 0..=9 {
        let s = 10f64.powi(exp);
        if values.iter().all(|&v| is_integer(v * s)) {
            return Ok(s);
        }
    }
    let bad = values.into_iter().find(|v| !is_integer(v * 1e9)).unwrap_or(f64::NAN);
    Err(Error::Unrepresentable(bad))
}

struct Edge {
    to: usize,
    rev: usize,
    cap: i64,
}

/// Dinic's algorithm on integer capacities.
struct FlowNetwork {
    adj: Vec<Vec<Edge>>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        Self { adj: (0..n).map(|_| Vec::new()).collect(), level: vec![0; n], iter: vec![0; n] }
    }

    /// Returns `(node, index)` of the forward edge.
    fn add_edge(&mut self, from: usize, to: usize, cap: i64) -> (usize, usize) {
        let (i, j) = (self.adj[from].len(), self.adj[to].len());
        self.adj[from].push(Edge { to, rev: j, cap });
        self.adj[to].push(Edge { to: from, rev: i, cap: 0 });
        (from, i)
    }

    fn bfs(&mut self, s: usize) {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for e in &self.adj[v] {
                if e.cap > 0 && self.level[e.to] < 0 {
                    self.level[e.to] = self.level[v] + 1;
                    queue.push_back(e.to);
                }
            }
        }
    }

    fn dfs(&mut self, v: usize, t: usize, f: i64) -> i64 {
        if v == t {
            return f;
        }
        while self.iter[v] < self.adj[v].len() {
            let (to, cap) = {
                let e = &self.adj[v][self.iter[v]];
                (e.to, e.cap)
            };
            if cap > 0 && self.level[v] < self.level[to] {
                let pushed = self.dfs(to, t, f.min(cap));
                if pushed > 0 {
                    let i = self.iter[v];
                    self.adj[v][i].cap -= pushed;
                    let rev = self.adj[v][i].rev;
                    self.adj[to][rev].cap += pushed;
                    return pushed;
                }
            }
            self.iter[v] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.iter_mut().for_each(|i| *i = 0);
            loop {
                let f = self.dfs(s, t, i64::MAX);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
    }
}

/// Solved network with the flow on every (device, slot) arc, in kWh.
struct FlowSolution {
    value: f64,
    arcs: Vec<Vec<f64>>,
}

fn solve(inst: &DiscreteInstance, rng: Option<&mut dyn rand::RngCore>) -> Result<FlowSolution> {
    let scale = integer_scale(inst)?;
    let to_int = |v: f64| (v * scale).round() as i64;
    let (n, t) = (inst.num_devices(), inst.num_slots());
    let (src, sink) = (0, n + t + 1);
    let mut net = FlowNetwork::new(n + t + 2);
    let mut device_order: Vec<usize> = (0..n).collect();
    let mut slot_order: Vec<usize> = (0..t).collect();
    let mut rng = rng;
    if let Some(r) = rng.as_deref_mut() {
        device_order.shuffle(r);
    }
    for &j in &device_order {
        net.add_edge(src, 1 + j, to_int(inst.supplies[j]));
    }
    let mut arcs = vec![vec![None; t]; n];
    for &j in &device_order {
        if let Some(r) = rng.as_deref_mut() {
            slot_order.shuffle(r);
        }
        for &k in &slot_order {
            let c = to_int(inst.caps[j][k]);
            if c > 0 {
                arcs[j][k] = Some((net.add_edge(1 + j, 1 + n + k, c), c));
            }
        }
    }
    for k in 0..t {
        net.add_edge(1 + n + k, sink, to_int(inst.demand[k]));
    }
    let value = net.max_flow(src, sink);
    let arcs = arcs
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|a| match a {
                    Some(((v, i), cap)) => (cap - net.adj[v][i].cap) as f64 / scale,
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    Ok(FlowSolution { value: value as f64 / scale, arcs })
}

fn total_demand_exact(inst: &DiscreteInstance) -> Result<f64> {
    let scale = integer_scale(inst)?;
    Ok(inst.demand.iter().map(|v| (v * scale).round() as i64).sum::<i64>() as f64 / scale)
}

/// Maximum energy (kWh) the fleet can deliver towards the demand.
pub fn maxflow_value(inst: &DiscreteInstance) -> Result<f64> {
    Ok(solve(inst, None)?.value)
}

pub fn oracle_feasible(inst: &DiscreteInstance) -> Result<bool> {
    Ok(maxflow_value(inst)? == total_demand_exact(inst)?)
}

pub fn oracle_min_unserved(inst: &DiscreteInstance) -> Result<f64> {
    Ok(total_demand_exact(inst)? - maxflow_value(inst)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrefixSearch {
    #[default]
    Scan,
    Bisect,
}

/// Largest `p` such that the first `p` slots can be served in full.
pub fn oracle_max_ttf(inst: &DiscreteInstance, search: PrefixSearch) -> Result<usize> {
    let ok = |p: usize| oracle_feasible(&inst.prefix(p));
    match search {
        PrefixSearch::Scan => {
            for p in 1..=inst.num_slots() {
                if !ok(p)? {
                    return Ok(p - 1);
                }
            }
            Ok(inst.num_slots())
        }
        PrefixSearch::Bisect => {
            let (mut lo, mut hi) = (0, inst.num_slots());
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if ok(mid)? {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            Ok(lo)
        }
    }
}

/// Schedule read off a maximum flow. With `rng` the arc order is shuffled,
/// which usually picks a different maximum flow.
pub fn oracle_schedule<R: Rng>(inst: &DiscreteInstance, rng: Option<&mut R>) -> Result<DispatchSchedule> {
    let sol = solve(inst, rng.map(|r| r as &mut dyn rand::RngCore))?;
    let w = inst.slot_width;
    let rates = (0..inst.num_slots())
        .map(|k| sol.arcs.iter().map(|row| row[k] / w).collect())
        .collect();
    DispatchSchedule::from_slots(w, rates)
}
