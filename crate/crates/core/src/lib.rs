//! Simulator and analysis toolkit for the Broadcast Gossip Algorithm (BGA).
//!
//! At every step one uniformly chosen node broadcasts its value and each of
//! its out-neighbors moves toward it by the mixing factor `q`. The update is
//! not symmetric, so the network average drifts; this crate measures that
//! accumulated error (the *bias*) and computes the topology-dependent
//! quantities that bound it.
//!
//! Modules:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | graph families (complete, ring, torus, hypercube, de Bruijn, random geometric) and JSON documents |
//! | [`spectral`] | Laplacian, spectral gap, contraction-rate bound |
//! | [`engine`] | broadcast step, incremental disagreement, seeded trials |
//! | [`analysis`] | Monte Carlo bias estimates, closed-form bounds, enumeration oracles, scaling fits |
//! | [`experiment`] | sweep specifications, presets and CSV/JSON series output |
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the experiments use.

// `!(x > 0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod engine;
mod error;
pub mod experiment;
pub mod graph;
mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::{Scalar, SpectralScalar};

pub use analysis::{BiasEstimate, BoundReport, VarianceCheck};
pub use engine::{InitialCondition, SimConfig, StateVector, TrialResult};
pub use graph::{DegreeStats, Family, Graph};
pub use spectral::SpectralSummary;

pub type StateVector64 = engine::StateVector<f64>;
pub type SimConfig64 = engine::SimConfig<f64>;
pub type TrialResult64 = engine::TrialResult<f64>;
pub type BiasEstimate64 = analysis::BiasEstimate<f64>;
pub type BoundReport64 = analysis::BoundReport<f64>;
pub type SpectralSummary64 = spectral::SpectralSummary<f64>;

pub type StateVector32 = engine::StateVector<f32>;
pub type SimConfig32 = engine::SimConfig<f32>;
pub type TrialResult32 = engine::TrialResult<f32>;
