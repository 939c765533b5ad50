//! Solvers for discounted Markov decision processes viewed as fixed-point
//! and root-finding problems: value iteration and its relaxed, accelerated
//! and momentum variants, policy iteration as Newton's method, Anderson
//! mixing, and the matching smooth-optimization kernels.

pub mod anderson;
pub(crate) mod clock;
pub mod error;
pub mod first_order;
pub mod harness;
pub mod instances;
pub mod kernels;
pub mod mdp;
pub mod newton;
pub mod trace;

pub use error::{Error, Result};
pub use mdp::{ContractionConstants, Mdp, Policy, ValueVector};
pub use trace::{SolverConfig, SolverTrace, Termination};
