//! Differentiable channel selection for the MLP of each block, and the FLOPs
//! cost model used by the search loss.

use serde::{Deserialize, Serialize};

use crate::error::{KcrError, Result};
use crate::numerics::{sample_gumbel, Matrix, Rng};

/// Lower bound for the annealed temperature.
pub const TAU_FLOOR: f64 = 1e-3;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-block architecture parameters over the `D` channels of the attention output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSelector {
    pub alpha: Vec<f64>,
    pub tau: f64,
    pub tau_init: f64,
    pub d_min: usize,
}

impl ChannelSelector {
    pub fn new(width: usize, alpha_init: f64, tau_init: f64, d_min: usize) -> Result<Self> {
        if width == 0 {
            return Err(KcrError::Argument("selector width must be >= 1".into()));
        }
        if !(tau_init > 0.0) {
            return Err(KcrError::Argument(format!("tau must be > 0, got {tau_init}")));
        }
        if d_min == 0 || d_min > width {
            return Err(KcrError::Argument(format!("d_min = {d_min} must lie in 1..={width}")));
        }
        Ok(Self { alpha: vec![alpha_init; width], tau: tau_init, tau_init, d_min })
    }

    pub fn width(&self) -> usize {
        self.alpha.len()
    }

    /// Logistic noise `ε⁽¹⁾ − ε⁽²⁾` for one soft-mask draw.
    pub fn draw_noise(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.width();
        let e1 = sample_gumbel(1, d, rng);
        let e2 = sample_gumbel(1, d, rng);
        e1.data().iter().zip(e2.data()).map(|(a, b)| a - b).collect()
    }

    /// `ĝ_i = σ((α_i + noise_i) / τ)` for a given noise realization.
    pub fn soft_mask_with_noise(&self, noise: &[f64]) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(noise)
            .map(|(a, e)| sigmoid((a + e) / self.tau))
            .collect()
    }

    /// A fresh Gumbel-sigmoid soft mask.
    pub fn soft_mask(&self, rng: &mut Rng) -> Vec<f64> {
        let noise = self.draw_noise(rng);
        self.soft_mask_with_noise(&noise)
    }

    /// Noise-free mask `σ(α / τ)`.
    pub fn expected_mask(&self) -> Vec<f64> {
        self.alpha.iter().map(|a| sigmoid(a / self.tau)).collect()
    }

    /// `∂ĝ_i/∂α_i = ĝ_i (1 − ĝ_i) / τ`.
    pub fn mask_slope(&self, mask: &[f64]) -> Vec<f64> {
        mask.iter().map(|g| g * (1.0 - g) / self.tau).collect()
    }

    /// 0/1 mask keeping channels with `α_i ≥ 0`, topped up to `d_min` by largest `α`.
    pub fn harden(&self) -> HardMask {
        let mut g: Vec<u8> = self.alpha.iter().map(|&a| u8::from(a >= 0.0)).collect();
        let kept = g.iter().filter(|&&v| v == 1).count();
        if kept < self.d_min {
            let mut order: Vec<usize> = (0..self.width()).collect();
            // descending alpha, ties toward the lower index
            order.sort_by(|&a, &b| {
                self.alpha[b]
                    .partial_cmp(&self.alpha[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            for &i in order.iter().take(self.d_min) {
                g[i] = 1;
            }
        }
        HardMask::new(g)
    }
}

/// Hardened channel mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardMask {
    pub g: Vec<u8>,
}

impl HardMask {
    pub fn new(g: Vec<u8>) -> Self {
        Self { g }
    }

    pub fn all(width: usize) -> Self {
        Self { g: vec![1; width] }
    }

    pub fn from_indices(width: usize, kept: &[usize]) -> Self {
        let mut g = vec![0; width];
        for &i in kept {
            g[i] = 1;
        }
        Self { g }
    }

    pub fn d_tilde(&self) -> usize {
        self.g.iter().filter(|&&v| v == 1).count()
    }

    pub fn width(&self) -> usize {
        self.g.len()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.g.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i).collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.g.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Column scaling `Z diag(mask)`.
pub fn apply_mask(z: &Matrix, mask: &[f64]) -> Result<Matrix> {
    if mask.len() != z.cols() {
        return Err(KcrError::Dimension(format!(
            "mask length {} vs {} columns",
            mask.len(),
            z.cols()
        )));
    }
    let mut out = z.clone();
    for i in 0..out.rows() {
        for (v, m) in out.row_mut(i).iter_mut().zip(mask) {
            *v *= m;
        }
    }
    Ok(out)
}

/// Keeps the selected columns, in their original order.
pub fn gather(z: &Matrix, mask: &HardMask) -> Result<Matrix> {
    if mask.width() != z.cols() {
        return Err(KcrError::Dimension(format!(
            "gather: mask width {} vs {} columns",
            mask.width(),
            z.cols()
        )));
    }
    Ok(z.select_columns(&mask.kept_indices()))
}

/// Places the columns of `z` back at the selected positions of a width-`width`
/// matrix; other columns are zero.
pub fn scatter(z: &Matrix, mask: &HardMask, width: usize) -> Result<Matrix> {
    if mask.width() != width || mask.d_tilde() != z.cols() {
        return Err(KcrError::Dimension(format!(
            "scatter: {} columns into mask with {} selected of {}",
            z.cols(),
            mask.d_tilde(),
            mask.width()
        )));
    }
    let kept = mask.kept_indices();
    let mut out = Matrix::zeros(z.rows(), width);
    for i in 0..z.rows() {
        let src = z.row(i);
        let dst = out.row_mut(i);
        for (s, &k) in src.iter().zip(&kept) {
            dst[k] = *s;
        }
    }
    Ok(out)
}

/// FLOPs of an MLP of `layers` square layers at width `d_tilde`: `l (2D̃² + D̃)`.
pub fn flops_block(layers: usize, d_tilde: usize) -> u64 {
    let d = d_tilde as u64;
    layers as u64 * (2 * d * d + d)
}

/// Multiplies out `(l_j, selector_j)` pairs into a cost.
#[derive(Debug, Clone)]
pub struct CostModel<'a> {
    pub blocks: Vec<(usize, &'a ChannelSelector)>,
    pub lambda: f64,
}

impl<'a> CostModel<'a> {
    pub fn new(blocks: Vec<(usize, &'a ChannelSelector)>, lambda: f64) -> Self {
        Self { blocks, lambda }
    }

    /// Total FLOPs of the hardened masks.
    pub fn hard_flops(&self) -> u64 {
        self.blocks
            .iter()
            .map(|(l, sel)| flops_block(*l, sel.harden().d_tilde()))
            .sum()
    }

    /// Expected-width surrogate of one block: `S = max(Σ σ(α/τ), d_min)`.
    fn expected_width(sel: &ChannelSelector) -> (f64, Vec<f64>, bool) {
        let mask = sel.expected_mask();
        let s: f64 = mask.iter().sum();
        let floored = s < sel.d_min as f64;
        (s.max(sel.d_min as f64), mask, floored)
    }

    /// Differentiable cost `Σ_j l_j (2 S_j² + S_j)`.
    pub fn soft_cost(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(l, sel)| {
                let (s, _, _) = Self::expected_width(sel);
                *l as f64 * (2.0 * s * s + s)
            })
            .sum()
    }

    /// `∂ soft_cost / ∂α` per block.
    pub fn soft_cost_grad(&self) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|(l, sel)| {
                let (s, mask, floored) = Self::expected_width(sel);
                if floored {
                    return vec![0.0; sel.width()];
                }
                let outer = *l as f64 * (4.0 * s + 1.0);
                sel.mask_slope(&mask).into_iter().map(|d| outer * d).collect()
            })
            .collect()
    }

    /// `λ ln(soft_cost)`.
    pub fn search_cost_term(&self) -> Result<f64> {
        if self.lambda == 0.0 {
            return Ok(0.0);
        }
        let c = self.soft_cost();
        if !(c > 0.0) {
            return Err(KcrError::Numeric(format!("soft cost must be positive, got {c}")));
        }
        Ok(self.lambda * c.ln())
    }

    /// `∂ λ ln(soft_cost) / ∂α` per block.
    pub fn search_cost_grad(&self) -> Vec<Vec<f64>> {
        let c = self.soft_cost();
        let scale = if self.lambda == 0.0 || c <= 0.0 { 0.0 } else { self.lambda / c };
        self.soft_cost_grad()
            .into_iter()
            .map(|g| g.into_iter().map(|v| v * scale).collect())
            .collect()
    }
}

/// `τ · decay`, floored at [`TAU_FLOOR`].
pub fn anneal(tau: f64, decay: f64) -> Result<f64> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(KcrError::Argument(format!("tau decay must lie in (0, 1], got {decay}")));
    }
    Ok((tau * decay).max(TAU_FLOOR))
}

/// Hardened architecture of one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockArchitecture {
    pub mask: Vec<u8>,
    pub d_tilde: usize,
    pub layers: usize,
    pub flops: u64,
}

/// Hardened architecture of the whole network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub blocks: Vec<BlockArchitecture>,
    pub total_flops: u64,
}

impl Architecture {
    pub fn from_masks(masks: &[HardMask], layers: usize) -> Self {
        let blocks: Vec<BlockArchitecture> = masks
            .iter()
            .map(|m| BlockArchitecture {
                mask: m.g.clone(),
                d_tilde: m.d_tilde(),
                layers,
                flops: flops_block(layers, m.d_tilde()),
            })
            .collect();
        let total_flops = blocks.iter().map(|b| b.flops).sum();
        Self { blocks, total_flops }
    }

    pub fn masks(&self) -> Vec<HardMask> {
        self.blocks.iter().map(|b| HardMask::new(b.mask.clone())).collect()
    }

    /// Checks internal consistency (widths, counts, per-block and total FLOPs).
    pub fn validate(&self, width: usize) -> Result<()> {
        for (j, b) in self.blocks.iter().enumerate() {
            let m = HardMask::new(b.mask.clone());
            if m.width() != width || b.mask.iter().any(|&v| v > 1) {
                return Err(KcrError::Schema(format!("block {j}: mask must be {width} zeros/ones")));
            }
            if m.d_tilde() != b.d_tilde || b.d_tilde == 0 {
                return Err(KcrError::Schema(format!("block {j}: d_tilde does not match mask")));
            }
            if flops_block(b.layers, b.d_tilde) != b.flops {
                return Err(KcrError::Schema(format!("block {j}: flops do not match formula")));
            }
        }
        if self.blocks.iter().map(|b| b.flops).sum::<u64>() != self.total_flops {
            return Err(KcrError::Schema("total_flops is not the sum over blocks".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_rel_error, Rng, DEFAULT_FD_STEP};
    use proptest::prelude::*;

    fn selector(alpha: &[f64], tau: f64, d_min: usize) -> ChannelSelector {
        ChannelSelector { alpha: alpha.to_vec(), tau, tau_init: tau.max(4.5), d_min }
    }

    #[test]
    fn soft_mask_examples() {
        let s = selector(&[0.3, -1.2, 2.0], 0.7, 1);
        let noise = [0.0; 3];
        let m = s.soft_mask_with_noise(&noise);
        for (g, a) in m.iter().zip(&s.alpha) {
            assert_eq!(*g, sigmoid(a / 0.7));
        }
        let zero = selector(&[0.0; 4], 3.0, 1);
        assert!(zero.expected_mask().iter().all(|&g| g == 0.5));
        let m = selector(&[2.0, -2.0], 0.5, 1).expected_mask();
        assert!((m[0] - 0.98201).abs() < 1e-5 && (m[1] - 0.01799).abs() < 1e-5);
        let drawn = s.soft_mask(&mut Rng::new(1, 1));
        assert!(drawn.iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn soft_mask_mean_at_zero_alpha() {
        for tau in [0.5, 1.0, 4.5] {
            let s = selector(&[0.0], tau, 1);
            let mut rng = Rng::new(77, 3);
            let mean: f64 = (0..10_000).map(|_| s.soft_mask(&mut rng)[0]).sum::<f64>() / 1e4;
            assert!((mean - 0.5).abs() < 0.02, "tau={tau} mean={mean}");
        }
    }

    #[test]
    fn low_temperature_limit() {
        let s = selector(&[1.5, -1.0, 3.0, -2.5], TAU_FLOOR, 1);
        let noise = [0.2, 0.1, -1.5, 0.4];
        let m = s.soft_mask_with_noise(&noise);
        for (i, g) in m.iter().enumerate() {
            let target = if s.alpha[i] + noise[i] > 0.0 { 1.0 } else { 0.0 };
            assert!((g - target).abs() < 1e-3);
        }
    }

    #[test]
    fn harden_examples() {
        let h = selector(&[1.2, -0.3, 0.0], 1.0, 1).harden();
        assert_eq!((h.g.clone(), h.d_tilde()), (vec![1, 0, 1], 2));
        let h = selector(&[-1.0, -0.2, -3.0], 1.0, 1).harden();
        assert_eq!(h.g, vec![0, 1, 0]);
        let h = selector(&[-1.0, -1.0, -3.0], 1.0, 2).harden();
        assert_eq!(h.g, vec![1, 1, 0]);
        assert_eq!(selector(&[0.5, 0.0, 2.0], 1.0, 1).harden().d_tilde(), 3);
    }

    #[test]
    fn mask_ops() {
        let z = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(apply_mask(&z, &[1.0; 3]).unwrap(), z);
        assert_eq!(apply_mask(&z, &[0.0; 3]).unwrap(), Matrix::zeros(2, 3));
        assert_eq!(apply_mask(&z, &[0.0, 1.0, 0.0]).unwrap().data(), &[0.0, 2.0, 0.0, 0.0, 5.0, 0.0]);
        assert!(apply_mask(&z, &[1.0]).is_err());

        let g = HardMask::new(vec![1, 0, 1]);
        let gz = gather(&z, &g).unwrap();
        assert_eq!(gz.data(), &[1.0, 3.0, 4.0, 6.0]);
        assert_eq!(scatter(&gz, &g, 3).unwrap().data(), &[1.0, 0.0, 3.0, 4.0, 0.0, 6.0]);
        assert_eq!(gather(&z, &HardMask::all(3)).unwrap(), z);
        assert!(scatter(&z, &g, 3).is_err());
        assert!(gather(&z, &HardMask::all(2)).is_err());
    }

    #[test]
    fn flops_examples() {
        assert_eq!(flops_block(2, 64), 16512);
        assert_eq!(flops_block(1, 1), 3);
        assert_eq!(flops_block(3, 0), 0);
    }

    #[test]
    fn soft_cost_examples() {
        let s = selector(&[0.0; 4], 1.0, 1);
        let model = CostModel::new(vec![(1, &s)], 0.1);
        assert!((model.soft_cost() - 10.0).abs() < 1e-12);

        let sat = selector(&[1e6; 64], 1.0, 8);
        let model = CostModel::new(vec![(2, &sat)], 0.1);
        assert!((model.soft_cost() - 16512.0).abs() < 1e-9);
        assert_eq!(model.hard_flops(), 16512);
        assert!((model.search_cost_term().unwrap() - 0.97119).abs() < 1e-5);
        let model = CostModel::new(vec![(2, &sat)], 0.0);
        assert_eq!(model.search_cost_term().unwrap(), 0.0);

        let one = selector(&[1e6], 1.0, 1);
        let model = CostModel::new(vec![(1, &one)], 0.3);
        // 2·1 + 1 = 3 flops; ln 3 scaled
        assert!((model.search_cost_term().unwrap() - 0.3 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn soft_cost_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5, 0);
        let alphas: Vec<Vec<f64>> = (0..2).map(|_| (0..6).map(|_| rng.normal()).collect()).collect();
        let eval = |a: &Matrix| {
            let sels: Vec<ChannelSelector> =
                (0..2).map(|j| selector(a.row(j), 1.3, 1)).collect();
            let model = CostModel::new(sels.iter().map(|s| (2, s)).collect(), 0.4);
            model.search_cost_term().unwrap()
        };
        let at = Matrix::from_rows(&alphas).unwrap();
        let numeric = finite_diff_grad(eval, &at, DEFAULT_FD_STEP).unwrap();
        let sels: Vec<ChannelSelector> = alphas.iter().map(|a| selector(a, 1.3, 1)).collect();
        let model = CostModel::new(sels.iter().map(|s| (2, s)).collect(), 0.4);
        let analytic = Matrix::from_rows(&model.search_cost_grad()).unwrap();
        assert!(max_rel_error(&analytic, &numeric, 1e-6) < 1e-4);
        let raw = Matrix::from_rows(&model.soft_cost_grad()).unwrap();
        let numeric_raw = finite_diff_grad(
            |a| {
                let sels: Vec<ChannelSelector> = (0..2).map(|j| selector(a.row(j), 1.3, 1)).collect();
                CostModel::new(sels.iter().map(|s| (2, s)).collect(), 0.4).soft_cost()
            },
            &at,
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!(max_rel_error(&raw, &numeric_raw, 1e-6) < 1e-4);
    }

    #[test]
    fn anneal_examples() {
        assert!((anneal(4.5, 0.95).unwrap() - 4.275).abs() < 1e-12);
        assert_eq!(anneal(2.0, 1.0).unwrap(), 2.0);
        let mut t = 4.5;
        for _ in 0..1000 {
            t = anneal(t, 0.5).unwrap();
        }
        assert_eq!(t, TAU_FLOOR);
        assert!(anneal(1.0, 0.0).is_err());
    }

    #[test]
    fn architecture_json_is_consistent() {
        let arch = Architecture::from_masks(&[HardMask::new(vec![1, 0, 1, 1]), HardMask::all(4)], 2);
        assert_eq!(arch.total_flops, flops_block(2, 3) + flops_block(2, 4));
        arch.validate(4).unwrap();
        let json = serde_json::to_string(&arch).unwrap();
        let back: Architecture = serde_json::from_str(&json).unwrap();
        assert_eq!(back, arch);
        let mut bad = arch.clone();
        bad.total_flops += 1;
        assert!(bad.validate(4).is_err());
    }

    proptest! {
        #[test]
        fn mask_monotone_in_alpha(a in -5.0f64..5.0, da in 0.001f64..3.0, e in -3.0f64..3.0, tau in 0.05f64..5.0) {
            let lo = selector(&[a], tau, 1).soft_mask_with_noise(&[e])[0];
            let hi = selector(&[a + da], tau, 1).soft_mask_with_noise(&[e])[0];
            prop_assert!(hi >= lo);
        }

        #[test]
        fn harden_scale_invariant(alpha in proptest::collection::vec(-3.0f64..3.0, 1..24), c in 0.01f64..100.0) {
            let s = selector(&alpha, 1.0, 1);
            let scaled: Vec<f64> = alpha.iter().map(|a| a * c).collect();
            prop_assert_eq!(s.harden(), selector(&scaled, 1.0, 1).harden());
        }

        #[test]
        fn scatter_gather_is_hard_masking(seed in 0u64..1000, bits in proptest::collection::vec(0u8..2, 1..16)) {
            let mut rng = Rng::new(seed, 0);
            let z = Matrix::from_fn(5, bits.len(), |_, _| rng.normal());
            let mask = HardMask::new(bits.clone());
            let round = scatter(&gather(&z, &mask).unwrap(), &mask, bits.len()).unwrap();
            prop_assert_eq!(round, apply_mask(&z, &mask.as_f64()).unwrap());
        }

        #[test]
        fn soft_cost_at_least_floor(alpha in proptest::collection::vec(-20.0f64..20.0, 8..32), d_min in 1usize..8) {
            let s = selector(&alpha, 0.7, d_min);
            let model = CostModel::new(vec![(2, &s)], 1.0);
            prop_assert!(model.soft_cost() >= flops_block(2, d_min) as f64 - 1e-9);
        }
    }
}
