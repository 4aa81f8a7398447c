//! Symmetric eigendecomposition by cyclic Jacobi rotations, and the
//! eigenvalue-thresholded pseudo-inverse built on it.

use crate::error::{KcrError, Result};
use crate::numerics::Matrix;

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, in the order of `values`.
    pub vectors: Matrix,
}

/// Induced infinity norm (max absolute row sum).
pub fn inf_norm(a: &Matrix) -> f64 {
    (0..a.rows())
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Checks squareness, finiteness and symmetry to `1e-10` relative (infinity norm).
pub(crate) fn check_symmetric(a: &Matrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(KcrError::Dimension(format!(
            "{what}: expected a square matrix, got {:?}",
            a.shape()
        )));
    }
    a.ensure_finite(what)?;
    let n = a.rows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| (a.get(i, j) - a.get(j, i)).abs()).sum();
        worst = worst.max(s);
    }
    let scale = inf_norm(a);
    if worst > 1e-10 * scale {
        return Err(KcrError::Numeric(format!(
            "{what}: matrix is not symmetric (‖A - Aᵀ‖∞ = {worst:e}, ‖A‖∞ = {scale:e})"
        )));
    }
    Ok(())
}

/// Eigendecomposition `A = V diag(λ) Vᵀ` of a symmetric matrix.
///
/// The input is symmetrized by averaging with its transpose before rotating.
/// Eigenvalues are returned in descending order; equal eigenvalues keep the
/// order of their diagonal position after convergence.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    check_symmetric(a, "sym_eig")?;
    let n = a.rows();
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    if n > 1 && scale > 0.0 {
        let target = f64::EPSILON * 1e-2 * scale;
        for sweep in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j).powi(2))
                .sum::<f64>()
                .sqrt();
            if off <= target {
                break;
            }
            for p in 0..n - 1 {
                for q in (p + 1)..n {
                    let apq = m.get(p, q).abs();
                    // negligible against both diagonal entries: zero it outright
                    if sweep > 3
                        && m.get(p, p).abs() + 100.0 * apq == m.get(p, p).abs()
                        && m.get(q, q).abs() + 100.0 * apq == m.get(q, q).abs()
                    {
                        m.set(p, q, 0.0);
                        m.set(q, p, 0.0);
                        continue;
                    }
                    rotate(&mut m, &mut v, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    // stable sort: ties keep the lower index first
    order.sort_by(|&x, &y| diag[y].partial_cmp(&diag[x]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.select_columns(&order);
    vectors.ensure_finite("sym_eig eigenvectors")?;
    Ok(SymEig { values, vectors })
}

#[inline]
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.is_infinite() {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m.get(k, p);
        let akq = m.get(k, q);
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m.set(k, p, new_kp);
        m.set(p, k, new_kp);
        m.set(k, q, new_kq);
        m.set(q, k, new_kq);
    }
    m.set(p, p, app - t * apq);
    m.set(q, q, aqq + t * apq);
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix.
///
/// Eigenvalues at or below `tol` are treated as zero. `None` uses
/// `1e-10 * λ_max`.
pub fn pseudo_inverse(a: &Matrix, tol: Option<f64>) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    let n = a.rows();
    let lmax = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = tol.unwrap_or(1e-10 * lmax);
    if tol < 0.0 {
        return Err(KcrError::Argument(format!("pseudo_inverse: negative tolerance {tol}")));
    }
    let inv: Vec<f64> = eig
        .values
        .iter()
        .map(|&l| if l > tol { 1.0 / l } else { 0.0 })
        .collect();
    let mut scaled = eig.vectors.clone();
    for i in 0..n {
        for (j, s) in inv.iter().enumerate() {
            let val = scaled.get(i, j) * s;
            scaled.set(i, j, val);
        }
    }
    let out = scaled.nt(&eig.vectors);
    out.ensure_finite("pseudo_inverse")?;
    Ok(out)
}
