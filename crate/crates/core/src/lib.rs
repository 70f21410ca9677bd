//! Analysis toolkit for in-context learning experiments on language-model
//! activation dumps.

pub mod attnratio;
pub mod probes;
pub mod repgeom;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod taskgen;
pub mod tensorstore;
