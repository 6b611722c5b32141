use std::io::Write;

use serde::{Deserialize, Serialize};

use super::policy::RateVector;
use crate::model::StateVector;

/// Device `device` first went below zero at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCrossing {
    pub device: usize,
    pub time: f64,
}

/// A closed-loop run: states at event times, with constant rates on each
/// segment between consecutive events so that states are linear in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub event_times: Vec<f64>,
    /// Time-to-discharge at each event time (`event_times.len()` entries).
    pub states: Vec<StateVector>,
    /// Rates on each segment (`event_times.len() - 1` entries).
    pub rates: Vec<RateVector>,
    /// Demand on each segment, kW.
    pub demand: Vec<f64>,
    /// Demand the counted capacity could not serve on each segment, kW.
    pub shortfall: Vec<f64>,
    pub availability_aware: bool,
    pub allow_negative: bool,
    /// Set when the run halted at a depleted device.
    pub stopped_at: Option<f64>,
    pub zero_crossings: Vec<ZeroCrossing>,
}

impl Trajectory {
    pub fn num_segments(&self) -> usize {
        self.rates.len()
    }

    /// `(start, end, rates)` for each segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, &RateVector)> + '_ {
        self.event_times
            .windows(2)
            .zip(&self.rates)
            .map(|(w, r)| (w[0], w[1], r))
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.states[0]
    }

    pub fn terminal_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn end_time(&self) -> f64 {
        *self.event_times.last().expect("trajectory has at least one event")
    }

    /// Smallest entry over all recorded states. States are linear between
    /// events, so this is the minimum over the whole run.
    pub fn min_state(&self) -> f64 {
        self.states.iter().map(StateVector::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max_shortfall(&self) -> f64 {
        self.shortfall.iter().copied().fold(0.0, f64::max)
    }

    /// State at time `t`, interpolated linearly; clamps outside the run.
    pub fn state_at(&self, t: f64) -> StateVector {
        let times = &self.event_times;
        if t <= times[0] {
            return self.states[0].clone();
        }
        if t >= self.end_time() {
            return self.terminal_state().clone();
        }
        let k = times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (times[k], times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (&self.states[k], &self.states[k + 1]);
        StateVector(a.iter().zip(b.iter()).map(|(a, b)| a + w * (b - a)).collect())
    }

    /// Writes `t, x_1..x_N, u_1..u_N, shortfall`, one row per event. Rates
    /// and shortfall on a row hold on the segment that starts there; the
    /// final row leaves them blank.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let n = self.states[0].len();
        write_state_rate_csv(
            out,
            n,
            self.event_times.iter().enumerate().map(|(k, &t)| {
                (
                    t,
                    self.states[k].as_ref(),
                    self.rates.get(k).map(|r| (r.as_ref(), self.shortfall[k])),
                )
            }),
        )
    }
}

pub(crate) fn write_state_rate_csv<'a, W, I>(out: W, n: usize, rows: I) -> csv::Result<()>
where
    W: Write,
    I: Iterator<Item = (f64, &'a [f64], Option<(&'a [f64], f64)>)>,
{
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.push("shortfall".into());
    w.write_record(&header)?;
    for (t, x, tail) in rows {
        let mut rec: Vec<String> = Vec::with_capacity(2 * n + 2);
        rec.push(t.to_string());
        rec.extend(x.iter().map(f64::to_string));
        match tail {
            Some((u, s)) => {
                rec.extend(u.iter().map(f64::to_string));
                rec.push(s.to_string());
            }
            None => rec.extend(std::iter::repeat_n(String::new(), n + 1)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
