pub mod cli;
pub mod data;
pub mod error;
pub mod kernel;
pub mod model;
pub mod numerics;
pub mod selection;
pub mod training;

pub use error::{KcrError, Result};
pub use numerics::{Matrix, Rng};
