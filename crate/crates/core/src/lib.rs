//! Nonreciprocal light propagation in two coupled microcavities with a
//! two-level emitter in the first cavity: direction-dependent mean-field
//! steady states (all bistable branches), a time-domain oracle, transmission
//! and isolation observables, and figure-style parameter sweeps.

pub mod dynamics;
pub mod experiments;
pub mod io_cli;
pub mod model;
pub mod observables;
pub mod steady;

pub use model::{Direction, StateVector, SystemParams};
pub use steady::{SteadyBranch, Stability};
