//! Replica-symmetric saddle-point equations in the zero-temperature limit.
//!
//! The state is five overlaps `(V_s, q_s, m_s, V_w, q_w)` and their five
//! conjugates. [`hat_update`] integrates over the teacher channel and the
//! loss; [`overlap_update`] integrates over the spectrum of `FFᵀ/p`.

mod hats;
mod overlaps;
mod params;
mod solver;

pub use hats::{
    analytic_hat_update_square, has_closed_form, hat_update, ChannelIntegrator, ChannelState, XiRule, DEFAULT_XI_NODES,
};
pub use overlaps::overlap_update;
pub use params::{Hats, ModelParams, Overlaps};
pub use solver::{solve_fixed_point, FixedPoint, SaddleMap, SolverOptions, SolverReport, MIN_DAMPING};
