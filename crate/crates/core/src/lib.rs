//! Logical-inference models of Stern-Gerlach and EPRB experiments, the
//! operator separation of their data, and a 1D Schrödinger solver for the
//! robust-inference functional.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix `f64`.

pub mod eprb;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod num;
pub mod rng;
pub mod separation;
pub mod sg;
pub mod wave;

pub use error::{Error, Result};
pub use num::Real;

pub type UnitVector = geometry::UnitVector3<f64>;
pub type Rotation = geometry::Rotation3<f64>;
pub type ComplexMatrix = linalg::CMatrix<f64>;
pub type Model = inference::DichotomicModel<f64>;
pub type SgLog = sg::EventLog<f64>;
pub type PairLog = eprb::PairEventLog<f64>;
pub type Operator = separation::HermitianOperator<f64>;
pub type Grid = wave::SpatialGrid<f64>;
pub type Polar = wave::PolarField<f64>;
pub type Wave = wave::WaveField<f64>;
pub type Params = wave::PhysicalParams<f64>;
