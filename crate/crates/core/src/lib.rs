//! Feasibility and dispatch for fleets of storage devices that are only
//! available in some time windows.
//!
//! A fleet ([`model::Fleet`]) faces a piecewise-constant demand
//! ([`model::DemandProfile`]). [`feasibility::feasibility_by_dispatch`]
//! decides whether the demand can be served and returns either a verified
//! schedule or a witness of infeasibility. When it cannot,
//! [`optimal::min_unserved_energy`] and [`optimal::max_time_to_failure`] give
//! the least unserved energy and the latest achievable first failure. The
//! [`oracle`] module recomputes all three with a max-flow formulation on a
//! time grid.
//!
//! ```
//! use fleetdispatch::feasibility::feasibility_by_dispatch;
//! use fleetdispatch::scenario::counterexample_fixture;
//!
//! let cx = counterexample_fixture();
//! let verdict = feasibility_by_dispatch(&cx.fleet, &cx.d1)?;
//! assert!(verdict.feasible);
//! # Ok::<(), fleetdispatch::Error>(())
//! ```

pub mod bench;
pub mod error;
pub mod feasibility;
pub mod fixed_point;
pub mod ggddf;
pub mod model;
pub mod optimal;
pub mod oracle;
pub mod scenario;
pub mod schedule;

pub use error::{Error, Result};
