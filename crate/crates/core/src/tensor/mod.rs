//! Dense vector/matrix primitives, circular correlation, and negative-definite solves.

mod fft;
mod linalg;
mod vector;

pub use fft::{
    circ_convolve, circ_correlate, circ_correlate_naive, convolve, correlate, FftPlan,
    IMAGINARY_RESIDUE_TOL,
};
pub use linalg::{max_eigenvalue, solve_neg_definite, Cholesky};
pub use vector::{dot, norm, norm_inf, DenseVector, SymmetricMatrix};
