//! Process imputation for continuous-time animal movement models.
//!
//! The crate simulates potential-driven movement SDEs, fits approximate imputation
//! distributions (integrated OU and Gaussian process) to telemetry, and runs
//! two-stage MCMC that averages the complete-data posterior over imputed paths.
//! An exact Metropolis-within-Gibbs sampler for the first-order model serves as a
//! baseline, and [`experiments`] drives the replicated simulation studies.

pub mod aid;
pub mod analysis;
pub mod basis;
pub mod chain;
pub mod error;
pub mod evaluate;
pub mod exact;
pub mod experiments;
pub mod grid;
pub mod impute;
pub mod io;
pub mod optim;
pub mod parallel;
pub mod potential;
pub mod seed;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{velocities_from_path, LatentPath, Point, PriorSpec, Telemetry, TrajectoryGrid};
