//! Experiment runner for the `laplace-cauchy` solver.

pub mod config;
pub mod output;
pub mod runner;
