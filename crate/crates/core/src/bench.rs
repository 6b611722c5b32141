//! Fixed-point timings on generated fleets of growing size.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fixed_point::{solve_fixed_point, FixedPointOptions};
use crate::scenario::{generate_fleet, sample_demand, DemandParams, FleetParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    /// Median wall time of the repeats.
    pub seconds: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the fixed point for a generated fleet of each size, `repeats`
/// times, and reports the median time. The workload depends only on `seed`.
pub fn run_bench(sizes: &[usize], seed: u64, repeats: usize) -> Result<Vec<BenchRow>> {
    let opts = FixedPointOptions::default();
    sizes
        .iter()
        .map(|&n| {
            let fleet = generate_fleet(n, &FleetParams::default(), seed)?;
            let demand = sample_demand(&fleet, &DemandParams::default(), seed)?;
            let mut times = Vec::with_capacity(repeats.max(1));
            let mut last = None;
            for _ in 0..repeats.max(1) {
                let t = Instant::now();
                let fp = solve_fixed_point(&fleet, &demand, &opts)?;
                times.push(t.elapsed().as_secs_f64());
                last = Some(fp);
            }
            times.sort_by(f64::total_cmp);
            let fp = last.expect("at least one run");
            Ok(BenchRow { n, seconds: times[times.len() / 2], iterations: fp.iterations, residual: fp.residual })
        })
        .collect()
}
