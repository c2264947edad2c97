//! File formats, ingestion and the command-line driver around `spfts-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod figures;
pub mod pipeline;

pub use error::{AppError, Result};
