//! Estimation toolkit for binary-instrument, binary-treatment experiments:
//! supercomplier shares and characteristics, latent-group analysis, sharp
//! tests of the identifying assumptions, and an exact stratification
//! simulator for validating every estimator against analytic ground truth.

pub mod assumptions;
pub mod cli;
pub mod config;
pub mod data;
pub mod dgp;
pub mod groups;
pub mod identification;
pub mod regression;
pub mod report;

pub use data::{load_observations, ColumnMapping, DataError, ObservationTable};
pub use groups::{Group, Potentials, ResponseType};
pub use identification::{IdentificationError, Target, WaldEstimate};
