use serde::{Deserialize, Serialize};

use crate::error::{KcrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub image_side: usize,
    pub channels: usize,
    pub patch: usize,
    pub dim: usize,
    pub heads: usize,
    pub depth: usize,
    pub mlp_layers: usize,
    pub classes: usize,
    /// Learned additive positional embedding.
    pub pos_embed: bool,
    /// Minimum channels kept per block when hardening.
    pub d_min: usize,
    pub alpha_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_side: 16,
            channels: 1,
            patch: 4,
            dim: 32,
            heads: 4,
            depth: 2,
            mlp_layers: 2,
            classes: 4,
            pos_embed: false,
            d_min: 4,
            alpha_init: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(KcrError::Config(m));
        if self.patch == 0 || self.image_side == 0 || self.image_side % self.patch != 0 {
            return bad(format!("image_side {} not divisible by patch {}", self.image_side, self.patch));
        }
        if self.channels == 0 {
            return bad("channels must be >= 1".into());
        }
        if self.heads == 0 || self.dim == 0 || self.dim % self.heads != 0 {
            return bad(format!("dim {} not divisible by heads {}", self.dim, self.heads));
        }
        if self.depth == 0 {
            return bad("depth must be >= 1".into());
        }
        if self.mlp_layers == 0 {
            return bad("mlp_layers must be >= 1".into());
        }
        if self.classes == 0 {
            return bad("classes must be >= 1".into());
        }
        if self.d_min == 0 || self.d_min > self.dim {
            return bad(format!("d_min {} must lie in 1..={}", self.d_min, self.dim));
        }
        if !self.alpha_init.is_finite() {
            return bad("alpha_init must be finite".into());
        }
        Ok(())
    }

    /// Tokens per image.
    pub fn tokens(&self) -> usize {
        let s = self.image_side / self.patch;
        s * s
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    pub fn pixels(&self) -> usize {
        self.image_side * self.image_side * self.channels
    }

    pub fn d_feat(&self) -> usize {
        self.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let c = ModelConfig { patch: 5, ..Default::default() };
        assert!(matches!(c.validate(), Err(KcrError::Config(_))));
        let c = ModelConfig { heads: 3, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { depth: 0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { mlp_layers: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn derived_sizes() {
        let c = ModelConfig::default();
        assert_eq!(c.tokens(), 16);
        assert_eq!(c.patch_dim(), 16);
        assert_eq!(c.d_feat(), c.dim);
    }
}
