//! Measure weighted complete networks by eigen-moments, synthesize networks
//! with prescribed metric values, and simulate metapopulation spread and
//! survival on them.

pub mod abm;
pub mod classic;
pub mod eigen;
pub mod experiments;
pub mod network;
pub mod search;
pub mod synthesis;

pub use eigen::{EcMoments, EigenError, EigenSummary};
pub use network::{Bounds, DecodeError, NetworkError, WeightedNetwork};
