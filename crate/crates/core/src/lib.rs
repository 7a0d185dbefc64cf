//! Simulation and verification toolkit for one-dimensional asymmetric
//! zero-range processes in a disordered environment.

pub mod env;
pub mod experiments;
pub mod hydro;
pub mod jackson;
pub mod lattice;
pub mod measures;
pub mod rng;
pub mod sim;
pub mod stats;
