//! Gram matrices, kernel complexity, truncated nuclear norms (exact and
//! Nyström-approximated) and the generalization-bound quantities built on them.

mod bounds;
mod nystrom;
mod spectral;

pub use bounds::{
    gd_linear_probe, gd_residual_closed_form, kcr_bounds, BoundReport, GdClosedForm, DIVERGENCE_LIMIT,
};
pub use nystrom::{
    akc, approx_tails, column_scores, nystrom, tnn_approx, tnn_approx_grad, Landmarks, NystromFactors,
    EIGEN_DROP_RATIO, ORTHO_DROP_RATIO,
};
pub use spectral::{gram, kc_exact, spectrum, spectrum_of_features, tnn_exact, KernelSpectrum};
