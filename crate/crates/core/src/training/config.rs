use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate, read_split, Dataset, SyntheticSpec};
use crate::error::{KcrError, Result};
use crate::model::ModelConfig;

pub const CONFIG_SCHEMA: u32 = 1;

/// Largest admissible rank ratio.
pub const GAMMA_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub t_search: usize,
    pub t_train: usize,
    /// Retraining epochs `1..=t_warm` use cross-entropy only.
    pub t_warm: usize,
    pub batch: usize,
    /// Peak weight learning rate.
    pub lr: f64,
    /// Epochs of linear learning-rate rise before the cosine decay.
    pub lr_warmup_epochs: usize,
    /// The schedule starts and ends at `lr · lr_floor_ratio`.
    pub lr_floor_ratio: f64,
    pub weight_decay: f64,
    pub alpha_lr: f64,
    pub kcr_weight: f64,
    /// Weight of the log-cost term during search.
    pub lambda: f64,
    /// Rank ratio: `r = ⌈γ · min(n, d_feat)⌉`.
    pub gamma: f64,
    pub m_land: usize,
    /// Confidence parameter of the bounds.
    pub x: f64,
    pub tau_init: f64,
    pub tau_decay: f64,
    /// Fraction of each search epoch used for weight updates; the rest updates `α`.
    pub split_weights: f64,
    /// Rows per forward pass when extracting features or evaluating.
    pub eval_chunk: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_search: 10,
            t_train: 40,
            t_warm: 12,
            batch: 64,
            lr: 1e-3,
            lr_warmup_epochs: 2,
            lr_floor_ratio: 0.1,
            weight_decay: 0.01,
            alpha_lr: 20.0,
            kcr_weight: 1.0,
            lambda: 0.2,
            gamma: 0.25,
            m_land: 128,
            x: 1.0,
            tau_init: 4.5,
            tau_decay: 0.95,
            split_weights: 0.7,
            eval_chunk: 256,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(KcrError::Config(m));
        if self.t_warm > self.t_train {
            return bad(format!("t_warm {} exceeds t_train {}", self.t_warm, self.t_train));
        }
        if !(self.gamma > 0.0 && self.gamma <= GAMMA_MAX) {
            return bad(format!("gamma {} not in (0, {GAMMA_MAX}]", self.gamma));
        }
        if self.m_land == 0 {
            return bad("m_land must be >= 1".into());
        }
        if self.batch == 0 || self.eval_chunk == 0 {
            return bad("batch and eval_chunk must be >= 1".into());
        }
        if !(self.split_weights > 0.0 && self.split_weights < 1.0) {
            return bad(format!("split_weights {} not in (0, 1)", self.split_weights));
        }
        if !(self.tau_init > 0.0) || !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad("tau_init must be > 0 and tau_decay in (0, 1]".into());
        }
        for (name, v) in [
            ("lr", self.lr),
            ("lr_floor_ratio", self.lr_floor_ratio),
            ("weight_decay", self.weight_decay),
            ("alpha_lr", self.alpha_lr),
            ("kcr_weight", self.kcr_weight),
            ("lambda", self.lambda),
            ("x", self.x),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Where the images come from: IDX files in `dir`, or the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { dir: None, synthetic: SyntheticSpec::default() }
    }
}

/// Complete, versioned description of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut model = ModelConfig { dim: 64, depth: 4, heads: 4, ..ModelConfig::default() };
        model.d_min = 8;
        Self { schema: CONFIG_SCHEMA, seed: 0, data: DataConfig::default(), model, run: RunConfig::default() }
    }
}

/// Training and validation sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(KcrError::Schema(format!("unsupported config schema {}", self.schema)));
        }
        self.model.validate()?;
        self.run.validate()?;
        if self.data.dir.is_none() {
            self.data.synthetic.validate()?;
            if self.data.synthetic.classes != self.model.classes {
                return Err(KcrError::Config("data.synthetic.classes differs from model.classes".into()));
            }
            if self.data.synthetic.image_side != self.model.image_side || self.model.channels != 1 {
                return Err(KcrError::Config("synthetic images are single-channel of model.image_side".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| KcrError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KcrError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Materializes the datasets this config describes.
    pub fn load_data(&self) -> Result<Splits> {
        let classes = self.model.classes;
        let (train, val) = match &self.data.dir {
            Some(dir) => (read_split(dir, "train")?, read_split(dir, "val")?),
            None => generate(&self.data.synthetic, self.seed)?,
        };
        let splits = Splits { train: train.to_dataset(classes)?, val: val.to_dataset(classes)? };
        for d in [&splits.train, &splits.val] {
            if d.side != self.model.image_side {
                return Err(KcrError::Config(format!(
                    "images are {}×{}, model expects side {}",
                    d.side, d.side, self.model.image_side
                )));
            }
            if d.is_empty() {
                return Err(KcrError::Config("empty dataset split".into()));
            }
        }
        if self.run.m_land > splits.train.len() {
            return Err(KcrError::Config(format!(
                "m_land {} exceeds training set size {}",
                self.run.m_land,
                splits.train.len()
            )));
        }
        Ok(splits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), cfg.to_json());
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema": 1, "seed": 7, "run": {"t_train": 3, "t_warm": 1}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.run.t_train, 3);
        assert_eq!(cfg.run.batch, 64);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"bogus": 1}"#), Err(KcrError::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"run": {"lr": 1, "nope": 2}}"#), Err(KcrError::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"schema": 2}"#), Err(KcrError::Schema(_))));
        let warm = r#"{"run": {"t_train": 2, "t_warm": 3}}"#;
        assert!(ExperimentConfig::from_json(warm).is_err());
        let gamma = r#"{"run": {"gamma": 0.6}}"#;
        assert!(ExperimentConfig::from_json(gamma).is_err());
    }
}
