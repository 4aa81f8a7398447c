use crate::error::{KcrError, Result};
use crate::numerics::Matrix;

/// Default relative step for [`finite_diff_grad`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function, one entry at a time.
///
/// The step for entry `x` is `step * max(1, |x|)`.
pub fn finite_diff_grad<F>(mut f: F, at: &Matrix, step: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    if !(step > 0.0) {
        return Err(KcrError::Argument(format!("finite difference step must be > 0, got {step}")));
    }
    let mut x = at.clone();
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    for idx in 0..at.len() {
        let orig = x.data()[idx];
        let h = step * orig.abs().max(1.0);
        x.data_mut()[idx] = orig + h;
        let fp = f(&x);
        x.data_mut()[idx] = orig - h;
        let fm = f(&x);
        x.data_mut()[idx] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(KcrError::Numeric(format!(
                "function is non-finite when perturbing entry ({}, {})",
                idx / at.cols().max(1),
                idx % at.cols().max(1)
            )));
        }
        grad.data_mut()[idx] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// `max |a - b| / max(|b|, floor)` over entries; the comparison used by all gradient checks.
pub fn max_rel_error(a: &Matrix, b: &Matrix, abs_floor: f64) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / y.abs().max(abs_floor))
        .fold(0.0, f64::max)
}
