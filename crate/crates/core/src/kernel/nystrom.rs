use serde::{Deserialize, Serialize};

use crate::error::{KcrError, Result};
use crate::kernel::spectral::minimize_complexity;
use crate::numerics::{sym_eig, Matrix, Rng};

/// Relative cutoff below which landmark-gram eigenvalues are dropped.
pub const EIGEN_DROP_RATIO: f64 = 1e-12;

/// Columns losing all but this fraction of their norm to orthogonalization are dropped.
pub const ORTHO_DROP_RATIO: f64 = 1e-8;

/// How the landmark subset is chosen.
#[derive(Debug, Clone, Copy)]
pub enum Landmarks<'a> {
    /// Every sample is a landmark.
    All,
    /// Explicit sample indices.
    Indices(&'a [usize]),
    /// `m` indices drawn uniformly without replacement.
    Sample(usize),
}

/// Nyström factors of the linear-feature gram matrix.
///
/// `u_tilde` holds the approximate top eigenvectors `C Q Λ^{-1/2}`,
/// orthonormalized in eigenvalue order; `p = Fᵀ Ũ` is cached for the separable
/// regularizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NystromFactors {
    pub landmark_indices: Vec<usize>,
    pub q: Matrix,
    pub lambda: Vec<f64>,
    pub u_tilde: Matrix,
    pub p: Matrix,
    pub epoch_stamp: usize,
}

impl NystromFactors {
    /// Number of retained eigen-directions.
    pub fn r0(&self) -> usize {
        self.lambda.len()
    }

    /// The first `r` columns of `Ũ`.
    pub fn u_r(&self, r: usize) -> Matrix {
        let r = r.min(self.r0());
        let idx: Vec<usize> = (0..r).collect();
        self.u_tilde.select_columns(&idx)
    }

    /// The first `r` columns of `P = Fᵀ Ũ`.
    pub fn p_r(&self, r: usize) -> Matrix {
        let r = r.min(self.r0());
        let idx: Vec<usize> = (0..r).collect();
        self.p.select_columns(&idx)
    }
}

/// Nyström approximation of the top-`r0` eigenvectors of `K = F Fᵀ`.
///
/// Eigenvalues of the landmark gram `W` at or below `1e-12 · Λ_max` are dropped,
/// so the returned rank may be smaller than requested.
pub fn nystrom(
    features: &Matrix,
    landmarks: Landmarks<'_>,
    r0: usize,
    rng: &mut Rng,
) -> Result<NystromFactors> {
    let n = features.rows();
    if n == 0 || features.cols() == 0 {
        return Err(KcrError::Dimension("nystrom: empty feature matrix".into()));
    }
    let landmark_indices = match landmarks {
        Landmarks::All => (0..n).collect(),
        Landmarks::Indices(idx) => {
            if idx.is_empty() || idx.len() > n || idx.iter().any(|&i| i >= n) {
                return Err(KcrError::Argument(format!(
                    "nystrom: landmark indices must be a non-empty subset of 0..{n}"
                )));
            }
            idx.to_vec()
        }
        Landmarks::Sample(m) => {
            if m == 0 || m > n {
                return Err(KcrError::Argument(format!("nystrom: landmark count {m} not in 1..={n}")));
            }
            rng.sample_indices(n, m)
        }
    };
    let m = landmark_indices.len();
    if r0 > m {
        return Err(KcrError::Argument(format!("nystrom: r0 = {r0} exceeds landmark count {m}")));
    }

    let f_land = features.select_rows(&landmark_indices);
    let c = features.nt(&f_land);
    let w = f_land.nt(&f_land);
    if w.max_abs() == 0.0 {
        return Err(KcrError::DegenerateKernel("landmark gram matrix is all zero".into()));
    }
    let eig = sym_eig(&w)?;
    let lmax = eig.values[0];
    if !(lmax > 0.0) {
        return Err(KcrError::DegenerateKernel("landmark gram has no positive eigenvalue".into()));
    }
    let keep = eig
        .values
        .iter()
        .take(r0)
        .take_while(|&&l| l > EIGEN_DROP_RATIO * lmax)
        .count();
    let q_all = eig.vectors.select_columns(&(0..keep).collect::<Vec<_>>());
    let raw = c.mm(&q_all);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(keep);
    let mut kept = Vec::with_capacity(keep);
    for j in 0..keep {
        // the Λ^{-1/2} column scaling is absorbed by the normalization
        let mut v = raw.column(j);
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for c in &cols {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > ORTHO_DROP_RATIO * norm0 && norm > 0.0 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
            kept.push(j);
        }
    }
    let lambda: Vec<f64> = kept.iter().map(|&j| eig.values[j]).collect();
    let q = q_all.select_columns(&kept);
    let u_tilde = Matrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let p = features.tn(&u_tilde);
    u_tilde.ensure_finite("nystrom eigenvectors")?;
    Ok(NystromFactors { landmark_indices, q, lambda, u_tilde, p, epoch_stamp: 0 })
}

/// Approximate truncated nuclear norm `tr(K_n) - tr(U_rᵀ K_n U_r)`, evaluated as
/// `(‖F‖² - ‖Fᵀ U_r‖²) / n` and clamped at zero.
pub fn tnn_approx(features: &Matrix, u_r: &Matrix) -> Result<f64> {
    check_rows(features, u_r)?;
    let n = features.rows() as f64;
    let proj = if u_r.cols() == 0 { 0.0 } else { features.tn(u_r).frobenius_sq() };
    Ok(((features.frobenius_sq() - proj) / n).max(0.0))
}

/// Gradient of the unclamped approximate TNN w.r.t. `F`, with `U_r` held fixed:
/// `(2/n)(F - U_r U_rᵀ F)`.
pub fn tnn_approx_grad(features: &Matrix, u_r: &Matrix) -> Result<Matrix> {
    check_rows(features, u_r)?;
    let n = features.rows() as f64;
    let mut g = features.clone();
    if u_r.cols() > 0 {
        let proj = u_r.mm(&u_r.tn(features));
        g.axpy(-1.0, &proj);
    }
    g.scale_in_place(2.0 / n);
    Ok(g)
}

fn check_rows(features: &Matrix, u_r: &Matrix) -> Result<()> {
    if u_r.rows() != features.rows() {
        return Err(KcrError::Dimension(format!(
            "U_r has {} rows, features have {}",
            u_r.rows(),
            features.rows()
        )));
    }
    Ok(())
}

/// Per-column scores `s_j = ‖Fᵀ ũ_j‖² / n`.
pub fn column_scores(features: &Matrix, factors: &NystromFactors) -> Result<Vec<f64>> {
    check_rows(features, &factors.u_tilde)?;
    let n = features.rows() as f64;
    let p = features.tn(&factors.u_tilde);
    Ok((0..p.cols())
        .map(|j| (0..p.rows()).map(|i| p.get(i, j).powi(2)).sum::<f64>() / n)
        .collect())
}

/// Approximate tail curve `tr(K_n) - Σ_{j≤h} s_j` (clamped at zero) for `h = 0..=r0`.
pub fn approx_tails(features: &Matrix, factors: &NystromFactors) -> Result<Vec<f64>> {
    let scores = column_scores(features, factors)?;
    let trace = features.frobenius_sq() / features.rows() as f64;
    let mut tails = Vec::with_capacity(scores.len() + 1);
    let mut acc = 0.0;
    tails.push(trace.max(0.0));
    for s in scores {
        acc += s;
        tails.push((trace - acc).max(0.0));
    }
    Ok(tails)
}

/// Approximate kernel complexity: KC with each tail sum replaced by the
/// Nyström approximation.
pub fn akc(features: &Matrix, factors: &NystromFactors) -> Result<(f64, usize)> {
    let tails = approx_tails(features, factors)?;
    Ok(minimize_complexity(&tails, features.rows()))
}
