//! Reputation building with uncertain seller costs: payoff bounds, the
//! equilibrium automaton, a Monte Carlo simulator and audits of the
//! automaton's incentive and accounting properties.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod constants;
pub mod construction;
pub mod error;
pub mod game;
pub mod general;
pub mod lp;
pub mod scalar;
pub mod sim;

pub use constants::{derive_constants, DerivedConstants};
pub use construction::{
    fm_schedule, Class, Construction, Dynamics, EqState, FmSchedule, Prescription, Tightness,
};
pub use error::{Error, Result};
pub use game::{GameSpec, Outcome, OutcomeDist, PayoffVector};
pub use scalar::{Rational, Scalar};
