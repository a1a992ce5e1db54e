//! Kinetic models of two-good exchange.
//!
//! Agents hold two goods and trade in pairs following an Edgeworth-box rule
//! driven by Cobb-Douglas utilities. The crate provides
//!
//! * [`trade`]: utilities, admissibility and the microscopic trade rules,
//! * [`ensemble`]: particle simulation of the nonlinear (binary) and linear
//!   (mean-field) Boltzmann dynamics,
//! * [`fokker_planck`]: the quasi-invariant limit as a stochastic particle
//!   system in the diagonal coordinates `(v, w)`, with closed-form oracles,
//! * [`analysis`]: Fourier distances, contraction audits, concentration and
//!   tail diagnostics.

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod fokker_planck;
pub mod lattice;
pub mod noise;
pub mod rng;
pub mod trade;

pub use error::{ModelError, Result};
pub use noise::{NoiseKind, NoiseSpec};
pub use trade::{
    AgentState, CoefficientDraw, ExponentLaw, PercentPair, TradeParams, TradeRule, UtilityParams,
};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
