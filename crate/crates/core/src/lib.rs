//! Multi-generator text-to-SQL pipeline.

pub mod backend;
pub mod config;
pub mod dataset;
mod error;
pub mod eval;
pub mod exec;
pub mod filter;
pub mod fixtures;
pub mod generation;
pub mod pipeline;
pub mod schema;
pub mod selection;
pub mod sqltext;
pub mod synth;
pub mod templates;

pub use error::{Error, Result};
