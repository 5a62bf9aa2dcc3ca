//! Prompt-aligned H-space extraction and automated bias analysis for
//! U-Net latent diffusion models.
//!
//! Vectors are captured from the middle block during a single
//! consistency-model prediction ([`extraction`]), persisted with metadata
//! ([`store`]), compared by cosine distance ([`compare`]), clustered into a
//! concept atlas ([`atlas`]), injected back into generation
//! ([`conditioning`]) and cross-checked against an image-text classifier
//! ([`validation`]).

pub mod atlas;
pub mod compare;
pub mod conditioning;
pub mod corpus;
pub mod error;
pub mod extraction;
pub mod http;
pub mod hvector;
pub mod llm;
pub mod report;
pub mod store;
pub mod validation;

pub use error::{Error, Result};
pub use hvector::{HVector, PromptSpec, Shape, TimestepMode};
