//! Simulation and reduction of fast-slow systems driven by α-stable noise.
//!
//! The crate covers the noise generator ([`stable`]), system descriptions
//! ([`model`], [`systems`]), the averaged, linearised and nonlinear reduced
//! models ([`reduction`]), time stepping ([`integrate`]), characteristic-function
//! asymptotics ([`asymptotics`]) and the density and dependence estimators
//! used to compare runs ([`stats`]).

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod experiment;
pub mod integrate;
pub mod model;
pub mod output;
pub mod quad;
pub mod reduction;
pub mod rng;
pub mod stable;
pub mod stats;
pub mod systems;

pub use error::{Error, Result};
pub use integrate::{Execution, SampleSeries, Scheme, SimConfig};
pub use model::{Coefficient, FastSlowSystem, Interpretation, ScalarSde, SystemKind, ValidationReport};
pub use stable::{StableParams, StableSampler};
