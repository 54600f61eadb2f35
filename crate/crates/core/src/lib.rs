//! Simulation lab and bound calculator for non-elitist evolutionary
//! algorithms on OneMax and plateau fitness functions.

pub mod bitstring;
pub mod cli;
pub mod error;
pub mod fitness;
pub mod mutation;
pub mod rng;
pub mod selection;
pub mod transform;
pub mod verify;

pub use bitstring::Bitstring;
pub use error::{Error, Result};
pub use fitness::FitnessSpec;
pub use mutation::MutationSpec;
pub use rng::RandomSource;
pub use selection::{SelectionDistribution, SelectionSpec};
pub use transform::InstanceTransform;
pub mod config;
pub mod engine;
pub mod experiments;
pub mod theory;
