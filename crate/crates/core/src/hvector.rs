//! Prompt-aligned H-space vectors and their provenance.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Middle-block tensor shape for a single batch element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// Number of scalar elements, `channels * height * width`.
    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

/// Text conditioning for one extraction or generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_text: Option<String>,
    pub guidance_scale: f64,
    pub seed: u64,
}

impl PromptSpec {
    /// Guidance used when a caller does not choose one. Classifier-free
    /// guidance is active for any scale above 1.
    pub const DEFAULT_GUIDANCE: f64 = 1.5;

    pub fn new(text: impl Into<String>, seed: u64) -> Result<Self> {
        let spec = Self {
            text: text.into(),
            negative_text: None,
            guidance_scale: Self::DEFAULT_GUIDANCE,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_guidance(mut self, guidance_scale: f64) -> Result<Self> {
        self.guidance_scale = guidance_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn with_negative(mut self, negative: impl Into<String>) -> Self {
        self.negative_text = Some(negative.into());
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidPrompt("prompt text is empty".into()));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale >= 0.0) {
            return Err(Error::InvalidPrompt(format!(
                "guidance scale must be finite and >= 0, got {}",
                self.guidance_scale
            )));
        }
        Ok(())
    }

    /// Whether the sampler runs an unconditional pass alongside the conditional one.
    pub fn uses_cfg(&self) -> bool {
        self.guidance_scale > 1.0
    }
}

/// Denoising regime the activation was captured under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimestepMode {
    LcmSingleStep,
    LdmStep { t: u32 },
}

/// One flattened middle-block activation in (channel, height, width) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HVector {
    #[serde(skip)]
    pub values: Vec<f32>,
    pub shape: Shape,
    pub prompt: PromptSpec,
    pub model_id: String,
    pub timestep_mode: TimestepMode,
    pub created_at: DateTime<Utc>,
    /// Record ids this vector was averaged from; empty for raw captures.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
}

impl HVector {
    pub fn new(
        values: Vec<f32>,
        shape: Shape,
        prompt: PromptSpec,
        model_id: impl Into<String>,
        timestep_mode: TimestepMode,
    ) -> Result<Self> {
        let v = Self {
            values,
            shape,
            prompt,
            model_id: model_id.into(),
            timestep_mode,
            created_at: Utc::now(),
            sources: Vec::new(),
        };
        v.validate()?;
        Ok(v)
    }

    /// Builds a vector with placeholder provenance. Handy for synthetic fixtures.
    pub fn from_values(values: Vec<f32>) -> Result<Self> {
        let shape = Shape::new(values.len(), 1, 1);
        let prompt = PromptSpec {
            text: "synthetic".into(),
            negative_text: None,
            guidance_scale: 0.0,
            seed: 0,
        };
        Self::new(values, shape, prompt, "synthetic", TimestepMode::LcmSingleStep)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.shape.len() {
            return Err(Error::LengthMismatch {
                expected: self.shape.len(),
                actual: self.values.len(),
            });
        }
        check_finite(&self.values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn ensure_same_shape(&self, other: &HVector) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                actual: other.shape,
            });
        }
        Ok(())
    }
}

pub(crate) fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFiniteActivation { index }),
        None => Ok(()),
    }
}
