pub mod audit;
pub mod bias;
pub mod cli;
pub mod diffusion;
pub mod embedding;
pub mod error;
pub mod synthetic;

pub use error::{Error, Result};
