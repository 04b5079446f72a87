//! Explicit algebraic reconstruction of anisotropic elasticity tensors from
//! internal displacement fields.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

pub mod error;
pub mod fd;
pub mod grid;
pub mod hyperplane;
pub mod io;
pub mod linalg;
pub mod recon;
pub mod scalar;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use recon::{MeasurementSet, ReconConfig, ReconReport};
pub use scalar::Real;
pub use tensor::{Mat6, Stiffness, Sym3};

pub type Stiffness64 = tensor::Stiffness<f64>;
pub type Sym3f64 = tensor::Sym3<f64>;
pub type Quadratic64 = synth::QuadraticDisplacement<f64>;
pub type Grid64 = grid::Grid<f64>;
pub type Field64 = grid::Field<f64>;
pub type MeasurementSet64 = recon::MeasurementSet<f64>;
pub type ReconConfig64 = recon::ReconConfig<f64>;
pub type ReconReport64 = recon::ReconReport<f64>;
