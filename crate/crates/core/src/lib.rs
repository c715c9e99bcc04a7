//! Predictive inference for Fleming–Viot dependent Dirichlet processes.
//!
//! The posterior of the latent random measure at each data time is a finite
//! mixture of Dirichlet processes indexed by multiplicity vectors over the
//! distinct observed values. [`filter`] maintains that mixture across times,
//! [`death_process`] moves its weights over a lag, [`predictive`] evaluates and
//! samples the resulting mixture of Pólya urns and [`partition`] samples the
//! induced random partitions.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix `f64`.

// parameter guards are written as `!(x > 0)` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod death_process;
pub mod error;
pub mod filter;
pub mod lattice;
pub mod partition;
pub mod predictive;
pub mod scalar;

pub use error::{Error, Result};
pub use filter::{Batch, BaseDistribution, FilterConfig, GridPoint, Propagation};
pub use lattice::MultiplicityVector;
pub use partition::{Block, PartitionSample};
pub use scalar::Real;

pub type NodeSet = lattice::WeightedNodeSet<f64>;
pub type Base = filter::BaseMeasure<f64>;
pub type Filter = filter::FilterState<f64>;
pub type Predictive = predictive::PredictiveState<f64>;
pub type Coefficients = predictive::UrnCoefficients<f64>;
pub type Kernel = death_process::DeathKernel<f64>;

pub type NodeSet32 = lattice::WeightedNodeSet<f32>;
pub type Filter32 = filter::FilterState<f32>;
pub type Predictive32 = predictive::PredictiveState<f32>;
