//! Finite-element toolkit for a diffusion-reaction-dissolution-precipitation
//! system on periodically perforated domains and its homogenized limit.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: triangle meshes for the cell and the tiled rectangles, with point location.
//! - [`fem`]: P1 assembly on sparse storage, with direct and iterative solvers.
//! - [`kinetics`]: Langmuir precipitation rate and the regularized dissolution graph.
//! - [`cell`]: periodic cell problems and the effective tensors derived from them.
//! - [`micro`] / [`homogenized`]: time stepping of the two-scale and the effective model.
//! - [`verify`]: energy identities and corrector norms across scales.
//! - [`io`]: file formats and the command line front end.

pub mod cell;
pub mod error;
pub mod expr;
pub mod fem;
pub mod homogenized;
pub mod io;
pub mod kinetics;
pub mod mesh;
pub mod micro;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
