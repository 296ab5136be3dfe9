//! Dense matrices and the symmetric eigensolver used by the ZCA path.

mod jacobi;
mod matrix;

pub use jacobi::{condition_number, sym_evd, sym_evd_with, JacobiOptions, SymEig};
pub use matrix::Matrix;
pub(crate) use matrix::{dot, norm};
