//! Simulation and random-matrix event detection for radial distribution
//! networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`netmodel`]: network graph, incidence matrix, weighted Laplacians and
//!   the common-path identities for their inverses.
//! - [`powerflow`]: exact complex injections and the linearized power-flow
//!   model in both directions.
//! - [`stochastics`]: seeded load synthesis and covariance propagation.
//! - [`events`]: compensation-source event model and the rank-one
//!   covariance perturbation it induces.
//! - [`rmtdetect`]: window standardization, eigenvalue spectra,
//!   Marchenko-Pastur bounds, detection criteria, classification and
//!   localization.
//! - [`harness`]: scenario configuration, end-to-end pipeline, calibration,
//!   sweeps and file formats.

pub mod error;
pub mod events;
pub mod harness;
pub mod linalg;
pub mod netmodel;
pub mod powerflow;
pub mod rmtdetect;
pub mod stochastics;

pub use error::{Error, Result};

/// Complex scalar used for voltages, currents and Hermitian covariances.
pub type C64 = nalgebra::Complex<f64>;
