//! Epoch-frozen feature snapshot and the separable batch regularizer built on it.

use crate::error::{KcrError, Result};
use crate::kernel::{nystrom, Landmarks, NystromFactors};
use crate::numerics::{Matrix, Rng};

/// Target rank `⌈γ · min(n, d)⌉`.
pub fn target_rank(gamma: f64, n: usize, d: usize) -> usize {
    ((gamma * n.min(d) as f64).ceil() as usize).max(1)
}

#[derive(Debug, Clone)]
pub struct FeatureBank {
    pub snapshot: Matrix,
    pub factors: NystromFactors,
    pub r: usize,
    /// Row `i` is sample `i`'s row of `Ũ_r`.
    pub u_rows: Matrix,
    /// `P_r = F_snapshotᵀ Ũ_r`, `d × r`.
    pub p_r: Matrix,
    /// The epoch this bank is valid for.
    pub epoch_stamp: usize,
}

impl FeatureBank {
    pub fn new(snapshot: Matrix, mut factors: NystromFactors, r: usize, epoch_stamp: usize) -> Result<Self> {
        if r == 0 {
            return Err(KcrError::Argument("bank rank must be >= 1".into()));
        }
        let r = r.min(factors.r0());
        factors.epoch_stamp = epoch_stamp;
        let u_rows = factors.u_r(r);
        let p_r = factors.p_r(r);
        Ok(Self { snapshot, factors, r, u_rows, p_r, epoch_stamp })
    }

    pub fn n(&self) -> usize {
        self.snapshot.rows()
    }

    pub fn ensure_fresh(&self, epoch: usize) -> Result<()> {
        if self.epoch_stamp != epoch {
            return Err(KcrError::StaleBank { expected: epoch, found: Some(self.epoch_stamp) });
        }
        Ok(())
    }
}

/// Landmark indices drawn at the first refresh of a run and reused afterwards.
#[derive(Debug, Clone)]
pub struct LandmarkState {
    pub m: usize,
    pub indices: Option<Vec<usize>>,
    rng: Rng,
}

impl LandmarkState {
    pub fn new(m: usize, rng: Rng) -> Self {
        Self { m, indices: None, rng }
    }

    fn draw(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.m == 0 || self.m > n {
            return Err(KcrError::Argument(format!("landmark count {} not in 1..={n}", self.m)));
        }
        let idx = self.rng.sample_indices(n, self.m);
        self.indices = Some(idx.clone());
        Ok(idx)
    }
}

/// Nyström factors of `features` on the run's landmark set. A degenerate
/// landmark gram triggers one fresh draw before giving up.
pub fn factorize(features: &Matrix, landmarks: &mut LandmarkState) -> Result<NystromFactors> {
    let n = features.rows();
    let idx = match &landmarks.indices {
        Some(i) => i.clone(),
        None => landmarks.draw(n)?,
    };
    let r0 = idx.len().min(features.cols());
    let mut scratch = Rng::new(0, 0);
    match nystrom(features, Landmarks::Indices(&idx), r0, &mut scratch) {
        Err(KcrError::DegenerateKernel(_)) => {
            let idx = landmarks.draw(n)?;
            nystrom(features, Landmarks::Indices(&idx), r0, &mut scratch)
        }
        other => other,
    }
}

/// Builds the bank for `epoch` from freshly extracted features.
pub fn refresh_bank(features: Matrix, landmarks: &mut LandmarkState, gamma: f64, epoch: usize) -> Result<FeatureBank> {
    let factors = factorize(&features, landmarks)?;
    let r = target_rank(gamma, features.rows(), features.cols());
    FeatureBank::new(features, factors, r, epoch)
}

/// Batch regularizer `(1/B) Σ_i (‖f_i‖² − 2⟨u_i, f_i P_r⟩ + ⟨u_i, s_i P_r⟩)` over
/// live feature rows `f_i`, with `s_i` the snapshot row, and its gradient
/// `2 (f_i − P_r u_i) / B`.
///
/// This is the approximate truncated nuclear norm with `‖Fᵀ Ũ_r‖²` expanded to
/// first order around the snapshot: summed over all `n` samples with
/// live = snapshot it equals `tnn_approx` of the snapshot, and its gradient there
/// equals `tnn_approx_grad`.
pub fn kcr_batch_loss(
    indices: &[usize],
    live: &Matrix,
    bank: Option<&FeatureBank>,
    epoch: usize,
) -> Result<(f64, Matrix)> {
    let bank = bank.ok_or(KcrError::StaleBank { expected: epoch, found: None })?;
    bank.ensure_fresh(epoch)?;
    let b = indices.len();
    if b == 0 || live.rows() != b {
        return Err(KcrError::Dimension(format!("{} indices for {} live rows", b, live.rows())));
    }
    if live.cols() != bank.p_r.rows() {
        return Err(KcrError::Dimension(format!(
            "live features have width {}, bank has {}",
            live.cols(),
            bank.p_r.rows()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= bank.n()) {
        return Err(KcrError::Argument(format!("sample index {bad} outside the bank")));
    }
    let u = bank.u_rows.select_rows(indices);
    let proj = live.mm(&bank.p_r);
    let snap = bank.snapshot.select_rows(indices).mm(&bank.p_r);
    let back = u.nt(&bank.p_r);
    let mut total = 0.0;
    for i in 0..b {
        let f = live.row(i);
        let sq: f64 = f.iter().map(|v| v * v).sum();
        let ui = u.row(i);
        let inner: f64 = ui.iter().zip(proj.row(i)).map(|(a, c)| a * c).sum();
        let anchor: f64 = ui.iter().zip(snap.row(i)).map(|(a, c)| a * c).sum();
        total += sq - 2.0 * inner + anchor;
    }
    let scale = 1.0 / b as f64;
    let grad = live.zip_map(&back, |f, pb| 2.0 * scale * (f - pb));
    Ok((scale * total, grad))
}
