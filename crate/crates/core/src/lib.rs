//! Procedural synthetic VQA data generation and feature-level domain
//! alignment.
//!
//! The pipeline runs scene graphs → placed scenes → id/category masks →
//! template QA, alongside simulated (or ingested) region features that feed
//! feature swapping, MMD alignment, adversarial alignment and a small VQA
//! classifier used to compare them.

pub mod align;
pub mod error;
pub mod compositor;
mod domain;
pub mod exec;
pub mod features;
pub mod geometry;
pub mod pipeline;
pub mod qa;
pub mod rng;
pub mod scene;
pub mod toyvqa;

pub use domain::Domain;
pub use error::{Error, Result};
pub use exec::Exec;
