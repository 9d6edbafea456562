//! Internal-model regulator synthesis, closed-loop simulation and empirical
//! robustness checks for output regulation problems.
//!
//! Numeric kernels are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common double-precision case.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod expr;
pub mod harmonics;
pub mod internal_model;
pub mod linalg;
pub mod perturbations;
pub mod poly;
pub mod real;
pub mod robustness;
pub mod simulate;

pub use real::Real;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Trajectory64 = simulate::Trajectory<f64>;
pub type Trajectory32 = simulate::Trajectory<f32>;
pub type SteadyState64 = simulate::SteadyStateEstimate<f64>;
pub type LinearPlant64 = internal_model::LinearPlantSS<f64>;
pub type InternalModel64 = internal_model::InternalModelPair<f64>;
pub type TrigPolynomial64 = perturbations::TrigPolynomial<f64>;
pub type Segment64 = harmonics::UniformSegment<f64>;
