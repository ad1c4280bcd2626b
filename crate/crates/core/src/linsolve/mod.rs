//! Sparse symmetric storage, Jacobi-preconditioned CG and a lowest-eigenpair
//! solver for symmetric pencils.

mod eigen;
mod pcg;
mod skyline;
mod sparse;

pub use eigen::{
    dense_generalized, lowest_eigenpairs, lowest_eigenpairs_with, EigenOptions, EigenResult,
    DEFAULT_EIGEN_TOL,
};
pub use pcg::{pcg_solve, pcg_solve_from, DEFAULT_PCG_TOL};
pub use skyline::SkylineCholesky;
pub use sparse::SparseSymMatrix;


