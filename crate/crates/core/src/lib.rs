//! Latent-space attribute editing on a synthetic, fully observable world.

pub mod classifier;
pub mod config;
pub mod edit;
pub mod error;
pub mod eval;
pub mod formats;
pub mod manifest;
pub mod nn;
pub mod pipeline;
pub mod transformer;
pub mod video;
pub mod world;

pub use error::{Error, Result};
