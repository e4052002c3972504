//! Grid world, viewpoint-graph observations and classical planners.

pub mod baselines;
pub mod geom;
pub mod graph;
pub mod los;
pub mod world;

pub use geom::{Cell, Point};
pub use graph::{Lattice, Observation, PlanningSet, ViewpointGraph};
pub use los::{line_of_sight, SightMap};
pub use world::{coverage_fraction, load_map, sense_and_update, BeliefMap, GroundTruthMap, Knowledge, MapError};
