//! The greedy greatest-discharge-duration-first (GGDDF) feedback policies
//! and their closed-loop simulation.

mod policy;
mod simulate;
mod trajectory;

pub use policy::{augmented_demand_pointwise, policy_rates, PolicyDispatch, RateVector};
pub use simulate::{simulate, simulate_fixed_step};
pub use trajectory::{Trajectory, ZeroCrossing};
pub(crate) use trajectory::write_state_rate_csv;
