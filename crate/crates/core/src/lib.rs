//! Operator compression for heterogeneous diffusion problems.
//!
//! The library computes Petrov-Galerkin localized orthogonal decomposition
//! (PG-LOD) system matrices on a coarse Cartesian mesh for coefficients that
//! vary on a finer, unresolved scale, and learns the local
//! coefficient-to-matrix map with a dense feedforward network so that new
//! coefficients can be compressed by a single batched forward pass.
//!
//! Module overview:
//!
//! * [`mesh`]: dyadic Cartesian meshes, element neighborhoods and their
//!   local-to-global maps.
//! * [`coeff`]: coefficient families, analytic test fields and restriction
//!   to patches.
//! * [`linalg`]: dense LU, CSR matrices, banded LU, GMRES and power iteration.
//! * [`fem`]: Q1 finite elements, the quasi-interpolation operator and a fine
//!   reference solver.
//! * [`lod`]: element correctors, local and global effective matrices and the
//!   PG-LOD solve.
//! * [`dataset`]: offline data generation and minibatch loading.
//! * [`nn`]: the feedforward network, its gradients and ADAM training.
//! * [`surrogate`]: online assembly from network predictions and evaluation.
//! * [`experiment`]: configuration presets and the pipeline driven by the CLI.

mod binio;
pub mod coeff;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod linalg;
pub mod lod;
pub mod mesh;
pub mod nn;
pub mod surrogate;

pub use error::{Error, Result};
