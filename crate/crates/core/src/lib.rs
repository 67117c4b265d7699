//! Discrete-time simulation and heavy-traffic analysis of an `n x n` input-queued switch
//! under MaxWeight scheduling.

pub mod bounds;
pub mod geometry;
pub mod gg1;
pub mod io;
pub mod matching;
pub mod matrix;
pub mod model;
pub mod sim;
pub mod streams;

pub use matrix::{ArrivalMatrix, Matrix, QueueMatrix, RealMatrix};
pub use model::{Schedule, TrafficModel};
pub use sim::{run_steady_state, SimConfig, SimEstimate};
