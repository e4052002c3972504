//! Episodes, map generation, benchmarking, plots and training runs.

pub mod bench;
pub mod config;
pub mod env;
pub mod episode;
pub mod mapgen;
pub mod plot;
pub mod training;
