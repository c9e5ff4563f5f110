//! Proactive de-energization planning for radial distribution networks
//! exposed to wildfire, where line outage probabilities depend on the
//! power each line carries.
//!
//! The crate covers the network model ([`grid`]), the decision-dependent
//! outage law and its ambiguity set ([`transition`]), the single-hour robust
//! reconfiguration problem ([`stage`]), value-function training ([`adp`])
//! and Monte Carlo policy evaluation ([`simulate`]).

pub mod adp;
pub mod grid;
pub mod milp;
pub mod par;
pub mod simulate;
pub mod stage;
pub mod transition;

pub use grid::{FireSchedule, GridError, Network, SystemState, initial_state, load_network};
pub use stage::{BackendKind, DispatchSolution, EnumerationBackend, HighsBackend, SolverBackend};
pub use transition::{AmbiguitySet, CandidateModel, build_candidates};

#[cfg(test)]
pub(crate) mod testing;
