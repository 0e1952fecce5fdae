//! One-dimensional wave dynamics: detector data, the Fisher and Hamilton-Jacobi
//! functionals, the polar ↔ wave-function maps, and a Schrödinger evolver.
//!
//! Units: with `λ = 4/ħ²` the evolution equation is the ordinary Schrödinger
//! equation, `V` is an energy and `S` an action. The defaults are `ħ = m = 1`.

pub mod detector;
pub mod fields;
pub mod fq;
pub mod functionals;
pub mod grid;
pub mod madelung;
pub mod tdse;

/// Densities at or below this are treated as zero wherever `P` divides.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

pub use detector::{bin_probabilities, fisher_discrete, simulate_detector_clicks, DetectorData};
pub use fields::{polar_to_wave, wave_to_polar, PhysicalParams, PolarField, Potential, WaveField};
pub use fq::{check_f_equals_q, fq_grid, FqReport};
pub use functionals::{fisher_continuum, functional_f, functional_q, hj_residual};
pub use grid::{DiffOperator, SpatialGrid};
pub use madelung::{check_madelung_extremum, MadelungReport};
pub use tdse::{energy, evolve_tdse, gaussian_packet, EvolveOptions, Trajectory};
