//! Quasi-mode theory of excess noise in open linear resonators.
//!
//! The pipeline runs from spatial gain and loss profiles to coupling
//! matrices, the complex symmetric quasi-mode eigenproblem, the excess-noise
//! factors `K` and `K̃`, and a moment-equation oracle for the noise dynamics.

pub mod basis;
pub mod cli;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod quasimode;
pub mod spectral;

pub use basis::{make_box_basis, make_custom_basis, ModeBasis, SpatialGrid};
pub use coupling::{
    build_coupling, scale_to_rate, CouplingMatrix, ReservoirKind, ReservoirProfile,
};
pub use error::{Error, Result};
pub use quasimode::{analyze, QuasiModeReport};
pub use spectral::{assemble, eigendecompose, QuasiModeSet, SystemMatrix};
