//! Simulation and verification of forced hyperbolic mean curvature flows.
//!
//! * [`geometry`]: support-function representation of convex plane curves.
//! * [`ma_solver`]: method-of-lines solver for the support-function
//!   Monge–Ampère equation with stop-reason detection.
//! * [`radial`]: the reduced radial ODE `r_tt = −c₀/r + c̄(t) r` with collapse
//!   detection and its energy and collapse-time bounds.
//! * [`hypersurface`]: round-sphere solutions of the hypersurface flow and
//!   term-by-term checks of its evolution identities.
//! * [`verification`]: comparison and monotonicity checks over trajectories.
//! * [`io`]: trajectory CSV and report JSON formats.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forcing;
pub mod geometry;
pub mod hypersurface;
pub mod io;
pub mod ma_solver;
pub mod radial;
pub mod verification;

pub use error::{FlowError, Result};
pub use forcing::ForcingSchedule;
