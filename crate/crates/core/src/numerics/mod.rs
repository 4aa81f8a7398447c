//! Dense linear algebra, seeded sampling, and the finite-difference oracle.

mod eig;
mod fd;
mod matrix;
mod rng;

pub use eig::{inf_norm, pseudo_inverse, sym_eig, SymEig};
pub(crate) use eig::check_symmetric;
pub use fd::{finite_diff_grad, max_rel_error, DEFAULT_FD_STEP};
pub use matrix::Matrix;
pub(crate) use matrix::gemm;
pub use rng::{gumbel_from_uniform, sample_gumbel, Rng};
