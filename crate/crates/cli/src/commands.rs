use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use fleetdispatch::bench::run_bench;
use fleetdispatch::feasibility::{
    aligned_slot_width, feasibility_by_dispatch, subset_feasibility_check, FeasibilityVerdict, Witness, SUBSET_SLOT_CAP,
};
use fleetdispatch::model::{DemandProfile, Fleet};
use fleetdispatch::optimal::{max_time_to_failure, min_unserved_energy};
use fleetdispatch::oracle::{discretize, oracle_max_ttf, oracle_min_unserved, PrefixSearch};
use fleetdispatch::scenario::load_scenario;

use crate::Method;

/// Finest grid tried when the oracle slot width is left to default.
const ORACLE_SLOT_CAP: usize = 4096;
/// Allowed gap between the solver and the oracle, in kWh.
const UNSERVED_TOL: f64 = 1e-6;
/// Allowed overshoot of the oracle's slot bracket, in hours.
const TTF_TOL: f64 = 1e-6;

/// What a command prints and how the process exits.
pub struct Outcome {
    pub json: Value,
    pub summary: String,
    pub code: u8,
}

impl Outcome {
    fn ok(json: Value, summary: String) -> Self {
        Self { json, summary, code: 0 }
    }
}

fn load(path: &Path) -> Result<(Fleet, DemandProfile)> {
    let spec = load_scenario(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((spec.fleet()?, spec.demand()?))
}

fn to_json<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("result types serialize")
}

pub fn describe(w: &Witness) -> String {
    match w {
        Witness::Subset { slots, slot_width, demand_kwh, bound_kwh } => format!(
            "slots {slots:?} (width {slot_width} h) need {demand_kwh} kWh but the fleet can deliver at most {bound_kwh} kWh there"
        ),
        Witness::NegativeState { device, time } => format!("device {device} runs dry at t = {time} h"),
        Witness::Shortfall { time, kw } => format!("demand exceeds available power by {kw} kW at t = {time} h"),
    }
}

fn verdict_summary(method: &str, v: &FeasibilityVerdict) -> String {
    match (&v.witness, v.feasible) {
        (_, true) => format!("feasible ({method})"),
        (Some(w), false) => format!("infeasible ({method}): {}", describe(w)),
        (None, false) => format!("infeasible ({method})"),
    }
}

fn verdict_code(v: &FeasibilityVerdict) -> u8 {
    if v.feasible {
        0
    } else {
        2
    }
}

fn subset_width(fleet: &Fleet, demand: &DemandProfile, given: Option<f64>) -> Result<f64> {
    match given {
        Some(w) => Ok(w),
        None => aligned_slot_width(fleet, demand, SUBSET_SLOT_CAP).ok_or_else(|| {
            anyhow!("the scenario does not sit on any grid of at most {SUBSET_SLOT_CAP} slots; pass --slot-width")
        }),
    }
}

pub fn feasible(path: &Path, method: Method, slot_width: Option<f64>) -> Result<Outcome> {
    let (fleet, demand) = load(path)?;
    let dispatch = || feasibility_by_dispatch(&fleet, &demand);
    let subset = || -> Result<FeasibilityVerdict> {
        let w = subset_width(&fleet, &demand, slot_width)?;
        Ok(subset_feasibility_check(&fleet, &demand, w)?)
    };
    let tagged = |method: &str, v: &FeasibilityVerdict| {
        let mut j = to_json(v);
        j["method"] = json!(method);
        j
    };
    match method {
        Method::Dispatch => {
            let v = dispatch()?;
            Ok(Outcome { json: tagged("dispatch", &v), summary: verdict_summary("dispatch", &v), code: verdict_code(&v) })
        }
        Method::Subset => {
            let v = subset()?;
            Ok(Outcome { json: tagged("subset", &v), summary: verdict_summary("subset", &v), code: verdict_code(&v) })
        }
        Method::Both => {
            let d = dispatch()?;
            let s = subset()?;
            if d.feasible != s.feasible {
                bail!("verdicts disagree: dispatch says feasible={}, subset says feasible={}", d.feasible, s.feasible);
            }
            let json = json!({
                "method": "both",
                "feasible": d.feasible,
                "dispatch": to_json(&d),
                "subset": to_json(&s),
            });
            Ok(Outcome { json, summary: format!("{} (methods agree)", verdict_summary("dispatch", &d)), code: verdict_code(&d) })
        }
    }
}

pub fn dispatch(path: &Path, out: Option<&Path>) -> Result<Outcome> {
    let (fleet, demand) = load(path)?;
    let v = feasibility_by_dispatch(&fleet, &demand)?;
    let mut json = to_json(&v);
    let mut summary = verdict_summary("dispatch", &v);
    if let (Some(schedule), Some(out)) = (&v.schedule, out) {
        let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
        schedule.write_csv(BufWriter::new(file), &fleet, &demand)?;
        json["csv"] = json!(out.display().to_string());
        summary.push_str(&format!("; schedule written to {}", out.display()));
    }
    Ok(Outcome { json, summary, code: verdict_code(&v) })
}

fn oracle_width(fleet: &Fleet, demand: &DemandProfile, given: Option<f64>) -> Result<f64> {
    match given {
        Some(w) => Ok(w),
        None => aligned_slot_width(fleet, demand, ORACLE_SLOT_CAP).ok_or_else(|| {
            anyhow!("the scenario does not sit on any grid of at most {ORACLE_SLOT_CAP} slots; pass --slot-width")
        }),
    }
}

pub fn min_unserved(path: &Path, oracle_check: bool, slot_width: Option<f64>) -> Result<Outcome> {
    let (fleet, demand) = load(path)?;
    let r = min_unserved_energy(&fleet, &demand)?;
    let mut json = to_json(&r);
    let mut summary = format!("least unserved energy {:.6} kWh of {:.6} kWh", r.unserved_energy, demand.energy());
    if oracle_check {
        let w = oracle_width(&fleet, &demand, slot_width)?;
        let expected = oracle_min_unserved(&discretize(&fleet, &demand, w)?)?;
        let gap = (r.unserved_energy - expected).abs();
        json["oracle"] = json!({ "slot_width": w, "unserved_energy": expected, "gap": gap });
        if gap > UNSERVED_TOL {
            bail!("oracle disagrees: solver {} kWh, flow {} kWh", r.unserved_energy, expected);
        }
        summary.push_str("; oracle agrees");
    }
    Ok(Outcome::ok(json, summary))
}

pub fn max_ttf(path: &Path, oracle_check: bool, slot_width: Option<f64>) -> Result<Outcome> {
    let (fleet, demand) = load(path)?;
    let r = max_time_to_failure(&fleet, &demand)?;
    let mut json = to_json(&r);
    let mut summary = format!("latest first failure at {:.6} h after {} outer steps", r.tau_star, r.iterates.len());
    if !r.converged {
        summary.push_str(" (iterates had not settled)");
    }
    if oracle_check {
        let w = oracle_width(&fleet, &demand, slot_width)?;
        let p = oracle_max_ttf(&discretize(&fleet, &demand, w)?, PrefixSearch::Bisect)?;
        let (lo, hi) = (p as f64 * w, ((p + 1) as f64 * w).min(fleet.horizon_end()));
        json["oracle"] = json!({ "slot_width": w, "full_slots": p, "lower": lo, "upper": hi });
        if r.tau_star < lo - TTF_TOL || r.tau_star > hi + TTF_TOL {
            bail!("oracle disagrees: τ* = {} h lies outside [{lo}, {hi}] h", r.tau_star);
        }
        summary.push_str(&format!("; oracle brackets it in [{lo}, {hi}] h"));
    }
    Ok(Outcome::ok(json, summary))
}

#[derive(Serialize)]
struct CsvRow {
    #[serde(rename = "N")]
    n: usize,
    seconds: f64,
    iterations: usize,
}

pub fn bench(sizes: &[usize], seed: u64, repeats: usize, csv_path: Option<&Path>) -> Result<Outcome> {
    if sizes.is_empty() {
        bail!("--sizes is empty");
    }
    let rows = run_bench(sizes, seed, repeats)?;
    if let Some(p) = csv_path {
        let mut w = csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
        for r in &rows {
            w.serialize(CsvRow { n: r.n, seconds: r.seconds, iterations: r.iterations })?;
        }
        w.flush()?;
    }
    let mut summary = String::from("     N    seconds  iterations");
    for r in &rows {
        summary.push_str(&format!("\n{:>6} {:>10.4} {:>11}", r.n, r.seconds, r.iterations));
    }
    let json = json!({ "seed": seed, "repeats": repeats.max(1), "rows": to_json(&rows) });
    Ok(Outcome::ok(json, summary))
}
