use serde::{Deserialize, Serialize};

use crate::error::{KcrError, Result};
use crate::numerics::{sym_eig, Matrix};

/// `K = F Fᵀ`, or `K_n = F Fᵀ / n` when `normalize` is set.
pub fn gram(features: &Matrix, normalize: bool) -> Result<Matrix> {
    let (n, d) = features.shape();
    if n == 0 || d == 0 {
        return Err(KcrError::Dimension(format!("gram: empty feature matrix {n}x{d}")));
    }
    let mut k = features.nt(features);
    if normalize {
        k.scale_in_place(1.0 / n as f64);
    }
    Ok(k)
}

/// Descending eigenvalues `λ̂_1 ≥ … ≥ λ̂_{r0}` of the normalized gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpectrum {
    pub eigenvalues: Vec<f64>,
    pub n: usize,
    pub r0: usize,
}

impl KernelSpectrum {
    /// Builds a spectrum from raw eigenvalues: sorts descending, clamps negatives to zero.
    pub fn from_eigenvalues(mut values: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(KcrError::Argument("spectrum needs n >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KcrError::Numeric("non-finite eigenvalue".into()));
        }
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
        let r0 = values.len();
        Ok(Self { eigenvalues: values, n, r0 })
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Suffix sums `Σ_{i>h} λ̂_i` for `h = 0..=r0`, accumulated from the tail.
    pub fn suffix_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.r0 + 1];
        for h in (0..self.r0).rev() {
            out[h] = self.eigenvalues[h] + out[h + 1];
        }
        out
    }
}

/// Spectrum of a normalized gram matrix `K_n` (`r0 = n`).
pub fn spectrum(k_n: &Matrix) -> Result<KernelSpectrum> {
    let eig = sym_eig(k_n)?;
    KernelSpectrum::from_eigenvalues(eig.values, k_n.rows())
}

/// Spectrum of `K_n = F Fᵀ / n` with `r0 = min(n, d)`, computed on the smaller
/// of `F Fᵀ / n` and `Fᵀ F / n` (they share their nonzero eigenvalues).
pub fn spectrum_of_features(features: &Matrix) -> Result<KernelSpectrum> {
    let (n, d) = features.shape();
    if n == 0 || d == 0 {
        return Err(KcrError::Dimension(format!("spectrum: empty feature matrix {n}x{d}")));
    }
    let small = if d < n {
        features.tn(features).scale(1.0 / n as f64)
    } else {
        gram(features, true)?
    };
    let eig = sym_eig(&small)?;
    KernelSpectrum::from_eigenvalues(eig.values, n)
}

/// Kernel complexity `min_{h ∈ [0, r0]} h/n + sqrt((1/n) Σ_{i>h} λ̂_i)`.
///
/// Returns the minimum and the smallest minimizing `h`.
pub fn kc_exact(spec: &KernelSpectrum) -> (f64, usize) {
    minimize_complexity(&spec.suffix_sums(), spec.n)
}

/// Shared minimization over a non-increasing tail curve; ties go to the smaller `h`.
pub(crate) fn minimize_complexity(tails: &[f64], n: usize) -> (f64, usize) {
    let n = n as f64;
    let mut best = (f64::INFINITY, 0);
    for (h, &tail) in tails.iter().enumerate() {
        let value = h as f64 / n + (tail.max(0.0) / n).sqrt();
        if value < best.0 {
            best = (value, h);
        }
    }
    best
}

/// Truncated nuclear norm `Σ_{i>r} λ̂_i`.
pub fn tnn_exact(spec: &KernelSpectrum, r: usize) -> Result<f64> {
    if r > spec.r0 {
        return Err(KcrError::Argument(format!("tnn rank {r} exceeds r0 = {}", spec.r0)));
    }
    Ok(spec.suffix_sums()[r])
}
