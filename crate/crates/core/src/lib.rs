//! Executable models of two-party Bell nonlocality.
//!
//! The crate is organised around the [`Behavior`] table `p(a,b|x,y)`:
//!
//! * [`behavior`] holds scenarios, Bell expressions, deterministic strategies
//!   and the local-polytope membership test (a small dense simplex).
//! * [`quantum`] turns two-qubit states and projective settings into behaviors.
//! * [`covariance`] checks frame-indexed deterministic models and shows that
//!   the covariant ones are local.
//! * [`bilocal`] simulates entanglement swapping between two independent sources.
//! * [`freewill`] covers measurement dependence: the `log2(N/M)` deficit, the
//!   detection-loophole model and its measurement-dependent counterpart.
//! * [`randomness`] does the bookkeeping for Bell-certified randomness expansion.
//!
//! Outcome index 0 stands for the value `+1` and index 1 for `-1` wherever a
//! correlator is formed.

pub mod behavior;
pub mod bilocal;
pub mod covariance;
mod error;
pub mod freewill;
pub mod linalg;
pub mod quantum;
pub mod randomness;
pub mod sampling;

pub use behavior::{
    algebraic_bound, chsh_expression, enumerate_strategies, evaluate, is_local, local_bound,
    strategy_behavior, Behavior, BellExpression, DeterministicStrategy, LocalMembershipResult,
    Scenario,
};
pub use error::{Error, Result};
