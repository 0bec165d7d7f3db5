//! Simulation and analysis toolkit for Bell-CHSH tests with energy-time
//! entangled photon pairs.
//!
//! The crate is organized around the stages of such an experiment:
//!
//! - [`quantum`]: exact predictions for the path-qubit pair (states,
//!   analyzer projectors, coincidence probabilities, CHSH values, fidelity);
//! - [`sim`]: event-level Monte Carlo of pairs through the Franson or hug
//!   interferometer geometry, with time tags, dead time and postselection;
//! - [`analysis`]: correlators with Poisson errors, CHSH reports, fringe
//!   fits and visibility extraction from count tables;
//! - [`lhv`]: a local-hidden-variable adversary with time tags that
//!   quantifies the postselection loophole;
//! - [`tomo`]: linear and maximum-likelihood state tomography from the 16
//!   projective phase measurements.

pub mod analysis;
pub mod error;
pub mod lhv;
pub mod quantum;
pub mod sim;
pub mod simplex;
pub mod tomo;

pub use error::{Error, Result};
pub use quantum::{
    bell_phi_plus, canonical_settings, chsh_value, correlation, fidelity, werner_like,
    DensityOperator, MeasurementSettings,
};
pub use sim::{CountTable, GeometryConfig, Scheme};
