//! Multi-resolution approximation (M-RA) of Gaussian processes.

pub mod covariance;
pub mod error;
pub mod cli;
pub mod config;
pub mod executor;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod predict;
pub mod prior;

pub use covariance::{CovarianceModel, Family};
pub use error::{MraError, Result};
pub use executor::Executor;
pub use geometry::{Domain, KnotStrategy, Locations, PartitionTree, RegionPath, SplitPolicy};
