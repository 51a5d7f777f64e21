//! P1 finite elements on [`Mesh2D`](crate::mesh::Mesh2D).

mod assembly;
mod cholesky;
mod interp;
mod norms;
mod solver;
mod sparse;

pub use assembly::{
    assemble_interface_mass, assemble_mass, assemble_stiffness, lumped_interface_weights,
    p1_gradients, Conductivity,
};
pub use cholesky::{reverse_cuthill_mckee, EnvelopeCholesky};
pub use interp::{interpolate, Interpolator, MissPolicy, TriangleSampler};
pub use norms::{difference_norms, field_norms, FieldKind, FieldNorms, NodalField};
pub use solver::{solve_factored, solve_spd, solve_spd_from, CgOptions, CgOutcome};
pub use sparse::CsrMatrix;
