//! Average age of information (AoI) for N Poisson sources sharing a
//! first-come-first-served M/M/1 queue.
//!
//! The crate computes the long-run average age of one source's updates at the
//! monitor by four independent routes:
//!
//! * [`shs`] — a generic stationary solver for piecewise-linear stochastic
//!   hybrid systems with a finite discrete state space,
//! * [`mm1`] — the finite-buffer (M/M/1/m) blocking model, solved both through
//!   the generic engine and through an O(m) recursion, with the infinite-queue
//!   age extracted as the m → ∞ limit,
//! * [`closed_form`] — the closed-form expression for the limit age,
//! * [`sim`] — a discrete-event simulation for empirical validation.
//!
//! [`sweep`] evaluates grids of load points for figure-style CSV data, in
//! parallel when the `parallel` feature (default) is enabled.

pub mod closed_form;
pub mod mm1;
pub mod shs;
pub mod sim;
pub mod sweep;

pub use closed_form::{average_age_source, decay_root, single_source_age};
pub use mm1::Mm1Params;
pub use shs::{AgeSolution, ShsSpec, Transition};
pub use sim::{AgeEstimate, Buffer, SimConfig};
