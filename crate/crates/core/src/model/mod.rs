//! Desk-scale vision transformer with channel-selectable MLPs and a
//! hand-written reverse pass.

pub mod checkpoint;
pub mod config;
pub mod layers;
pub mod net;
pub mod optim;
pub mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Manifest, CHECKPOINT_SCHEMA};
pub use config::ModelConfig;
pub use net::{
    cross_entropy, loss_ce, patchify, FeatureRegularizer, GradBundle, KcrNet, LossParts, LossSpec, Mode, SoftNoise,
};
pub use optim::{alpha_sgd_step, sgd_step, AdamConfig, AdamW};
pub use params::{BlockParams, Params};
