//! Off-policy training of the hierarchical beacon/waypoint policy.

pub mod agent;
pub mod buffer;
pub mod losses;

pub use agent::{select_action, soft_update_target, ActMode, Agent, LossReport, StepOutcome, TrainError, TrainerConfig};
pub use buffer::{ReplayBuffer, SharedReplay, Transition};
