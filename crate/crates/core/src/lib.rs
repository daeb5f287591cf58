//! Inference of implicit physical specifications for cyber-physical
//! controllers: block diagrams, hybrid automata, simulation, trace emission,
//! invariant inference and specification mismatch detection.

pub mod automata;
pub mod cases;
pub mod infer;
pub mod model;
pub mod sim;
pub mod spec;
pub mod trace;
