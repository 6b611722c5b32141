//! Differential check against the flow oracle on random grid-aligned cases.

use anyhow::Result;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use fleetdispatch::feasibility::{feasibility_by_dispatch, subset_feasibility_check};
use fleetdispatch::optimal::{max_time_to_failure, min_unserved_energy};
use fleetdispatch::oracle::{discretize, oracle_feasible, oracle_max_ttf, oracle_min_unserved, PrefixSearch};
use fleetdispatch::scenario::random_aligned_case;

use crate::commands::Outcome;

const UNSERVED_TOL: f64 = 1e-6;
const TTF_TOL: f64 = 1e-6;

pub struct CheckParams {
    pub count: usize,
    pub max_n: usize,
    pub max_slots: usize,
    pub seed: u64,
    pub inject_fault: bool,
}

#[derive(Serialize)]
struct Disagreement {
    index: usize,
    issues: Vec<String>,
}

/// Case `i` draws from stream `i` of the seeded generator, so any case can be
/// replayed alone and the thread count does not matter.
fn case_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Returns whether the case is feasible and every mismatch found.
fn check_case(p: &CheckParams, i: usize) -> Result<(bool, Vec<String>)> {
    let case = random_aligned_case(&mut case_rng(p.seed, i), p.max_n, p.max_slots);
    let (fleet, demand, w) = (&case.fleet, &case.demand, case.slot_width);
    let inst = discretize(fleet, demand, w)?;
    let flow = oracle_feasible(&inst)?;
    let mut issues = Vec::new();

    let dispatch = feasibility_by_dispatch(fleet, demand)?.feasible ^ p.inject_fault;
    let subset = subset_feasibility_check(fleet, demand, w)?.feasible;
    if dispatch != flow || subset != flow {
        issues.push(format!("verdicts: dispatch {dispatch}, subset {subset}, flow {flow}"));
    }

    let u = min_unserved_energy(fleet, demand)?.unserved_energy;
    let u_flow = oracle_min_unserved(&inst)?;
    if (u - u_flow).abs() > UNSERVED_TOL {
        issues.push(format!("unserved: solver {u}, flow {u_flow}"));
    }

    let tau = max_time_to_failure(fleet, demand)?.tau_star;
    let full = oracle_max_ttf(&inst, PrefixSearch::Bisect)?;
    let (lo, hi) = (full as f64 * w, ((full + 1) as f64 * w).min(fleet.horizon_end()));
    if tau < lo - TTF_TOL || tau > hi + TTF_TOL {
        issues.push(format!("time to failure: solver {tau}, flow brackets [{lo}, {hi}]"));
    }
    Ok((flow, issues))
}

pub fn oracle_check(p: &CheckParams) -> Result<Outcome> {
    let results: Vec<(bool, Vec<String>)> = (0..p.count)
        .into_par_iter()
        .map(|i| check_case(p, i).unwrap_or_else(|e| (false, vec![format!("error: {e}")])))
        .collect();
    let feasible = results.iter().filter(|r| r.0).count();
    let disagreements: Vec<Disagreement> = results
        .into_iter()
        .enumerate()
        .filter(|(_, r)| !r.1.is_empty())
        .map(|(index, (_, issues))| Disagreement { index, issues })
        .collect();
    let json = json!({
        "count": p.count,
        "seed": p.seed,
        "max_n": p.max_n,
        "max_slots": p.max_slots,
        "feasible": feasible,
        "infeasible": p.count - feasible,
        "disagreements": disagreements,
    });
    let (summary, code) = if disagreements.is_empty() {
        (format!("{} instances ({feasible} feasible): solver and oracle agree", p.count), 0)
    } else {
        let first = &disagreements[0];
        (
            format!(
                "{} of {} instances disagree; first is #{} ({})",
                disagreements.len(),
                p.count,
                first.index,
                first.issues.join("; ")
            ),
            1,
        )
    };
    Ok(Outcome { json, summary, code })
}
