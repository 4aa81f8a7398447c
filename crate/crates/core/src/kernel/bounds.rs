//! The gradient-descent recursion on the linear head, its spectral closed
//! form, and the unit-constant KCR bounds.

use serde::{Deserialize, Serialize};

use crate::error::{KcrError, Result};
use crate::numerics::{check_symmetric, sym_eig, Matrix};

/// Residual above which the linear-probe recursion is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Runs `W ← W − (η/n) Fᵀ(F W − Y)` from `W = 0` for `t` iterations.
///
/// Returns the final weights and `‖F W_k − Y‖_F²` for `k = 0..=t`.
pub fn gd_linear_probe(
    features: &Matrix,
    labels: &Matrix,
    eta_step: f64,
    t: usize,
) -> Result<(Matrix, Vec<f64>)> {
    let (n, d) = features.shape();
    if labels.rows() != n {
        return Err(KcrError::Dimension(format!(
            "labels have {} rows, features have {n}",
            labels.rows()
        )));
    }
    if !(eta_step >= 0.0) {
        return Err(KcrError::Argument(format!("eta_step must be >= 0, got {eta_step}")));
    }
    let mut w = Matrix::zeros(d, labels.cols());
    let mut residuals = Vec::with_capacity(t + 1);
    let mut resid = labels.scale(-1.0);
    residuals.push(resid.frobenius_sq());
    for k in 1..=t {
        let grad = features.tn(&resid);
        w.axpy(-eta_step / n as f64, &grad);
        resid = features.mm(&w).sub(labels)?;
        let r = resid.frobenius_sq();
        if !r.is_finite() || r > DIVERGENCE_LIMIT {
            return Err(KcrError::StepSize { iteration: k, residual: r });
        }
        residuals.push(r);
    }
    Ok((w, residuals))
}

/// Spectral closed form of `‖(I − η K_n)ᵗ Y‖_F²`.
#[derive(Debug, Clone)]
pub struct GdClosedForm {
    eigenvalues: Vec<f64>,
    /// `‖V_iᵀ Y‖²` per retained eigen-direction.
    energies: Vec<f64>,
    /// `‖(I − V Vᵀ) Y‖_F²`, the part of `Y` in the nullspace of `K_n`.
    nullspace: f64,
    /// `‖Y‖_F²`, returned as-is at `t = 0`.
    total: f64,
}

impl GdClosedForm {
    pub fn new(k_n: &Matrix, labels: &Matrix) -> Result<Self> {
        check_symmetric(k_n, "gd closed form")?;
        if labels.rows() != k_n.rows() {
            return Err(KcrError::Dimension(format!(
                "labels have {} rows, K_n is {}x{}",
                labels.rows(),
                k_n.rows(),
                k_n.cols()
            )));
        }
        let eig = sym_eig(k_n)?;
        let lmax = eig.values.first().copied().unwrap_or(0.0).max(0.0);
        let tol = 1e-12 * lmax.max(f64::MIN_POSITIVE);
        let keep: Vec<usize> = (0..eig.values.len()).filter(|&i| eig.values[i] > tol).collect();
        let v = eig.vectors.select_columns(&keep);
        let proj = v.tn(labels);
        let energies: Vec<f64> = (0..proj.rows()).map(|i| proj.row(i).iter().map(|x| x * x).sum()).collect();
        let captured = v.mm(&proj);
        let nullspace = labels.sub(&captured)?.frobenius_sq();
        Ok(Self {
            eigenvalues: keep.iter().map(|&i| eig.values[i]).collect(),
            energies,
            nullspace,
            total: labels.frobenius_sq(),
        })
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Whether `η λ̂_1 < 2`, the regime in which the recursion contracts.
    pub fn is_stable(&self, eta_step: f64) -> bool {
        eta_step * self.max_eigenvalue() < 2.0
    }

    pub fn residual(&self, eta_step: f64, t: usize) -> f64 {
        if t == 0 {
            return self.total;
        }
        let decayed: f64 = self
            .eigenvalues
            .iter()
            .zip(&self.energies)
            .map(|(&l, &e)| (1.0 - eta_step * l).powi(2 * t as i32) * e)
            .sum();
        decayed + self.nullspace
    }
}

pub fn gd_residual_closed_form(k_n: &Matrix, labels: &Matrix, eta_step: f64, t: usize) -> Result<f64> {
    Ok(GdClosedForm::new(k_n, labels)?.residual(eta_step, t))
}

/// Two-sided generalization bound with the hidden constants set to one.
///
/// `akc` is the complexity term the bounds were built from; `kc` carries the
/// exact kernel complexity when it was computed alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epoch: usize,
    pub train_residual: f64,
    pub kc: f64,
    pub akc: f64,
    pub x: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BoundReport {
    /// `kc_used + x/n`, the half-width of the band.
    pub fn half_width(kc_used: f64, n: usize, x: f64) -> f64 {
        kc_used + x / n as f64
    }

    pub fn with_epoch(mut self, epoch: usize) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn with_exact_kc(mut self, kc: f64) -> Self {
        self.kc = kc;
        self
    }
}

/// `train_residual ∓ (kc_used + x/n)`.
pub fn kcr_bounds(train_residual: f64, kc_used: f64, n: usize, x: f64) -> BoundReport {
    let w = BoundReport::half_width(kc_used, n.max(1), x);
    BoundReport {
        epoch: 0,
        train_residual,
        kc: kc_used,
        akc: kc_used,
        x,
        lower: train_residual - w,
        upper: train_residual + w,
    }
}
