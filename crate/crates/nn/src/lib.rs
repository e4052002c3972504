//! Autodiff core and attention networks for hierarchical beacon/waypoint decisions.

pub mod layers;
pub mod nets;
pub mod params;
pub mod tape;

pub use nets::{CriticNet, Distributions, NetConfig, NnError, PolicyNet, PolicyOut};
pub use params::{Adam, ParamError, ParamSet};
pub use tape::{Mat, Tape, TapeError, Var};
