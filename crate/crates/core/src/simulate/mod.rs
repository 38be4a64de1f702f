//! Closed-loop simulation: exact Gaussian moments, distributional
//! consistency and Monte Carlo trajectories.

pub mod controller;
pub mod engine;
pub mod gaussian;
pub mod moments;
pub mod trajectories;
