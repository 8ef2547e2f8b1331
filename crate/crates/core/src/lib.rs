//! Chemostat competition with density-dependent extraction of the weakest
//! species.
//!
//! * [`model`]: parameters, Monod kinetics, right-hand side, break-even levels.
//! * [`integrator`]: adaptive Dormand–Prince integration with finite-time
//!   extinction events.
//! * [`equilibria`]: boundary and interior equilibria, Jacobians, stability.
//! * [`linalg`]: small dense matrices and a nonsymmetric eigenvalue solver.
//! * [`reduction`]: the two-species Lotka–Volterra extraction system and its
//!   extinction threshold.
//! * [`basin`]: winner maps over initial conditions, separatrix bisection and
//!   dilution sweeps.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basin;
pub mod equilibria;
mod float_repr;
pub mod integrator;
pub mod linalg;
pub mod model;
pub mod reduction;

pub use integrator::{classify_winner, integrate, IntegrationOptions, Trajectory, VectorField};
pub use model::{break_even, cem_rhs, monod, ChemostatParams, SystemState, WinnerLabel};
