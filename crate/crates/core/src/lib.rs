//! Entropic optimal transport on finite metric spaces and its zero-temperature limit.
//!
//! A [`Problem`] carries two finite metric spaces, marginals and a cost. At
//! inverse temperature `beta` the Schrödinger potentials give the Gibbs plan
//! and the pressure; annealing `beta` upward recovers a Kantorovich dual
//! solution and the maximal-entropy optimal plan, which the [`oracle`] checks
//! exactly on small instances.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annealing;
pub mod deviations;
pub mod duality;
pub mod error;
pub mod measure;
pub mod oracle;
pub mod potentials;
pub mod problem;
pub mod sampling;

pub use error::{Error, Result};
pub use measure::{CostModel, ExtReal, Marginal, MetricSample, TransportPlan, TriangleCheck};
pub use potentials::{PotentialPair, SolveReport};
pub use problem::Problem;
