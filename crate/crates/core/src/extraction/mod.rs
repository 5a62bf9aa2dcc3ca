//! Capture of prompt-aligned H-space vectors from a diffusion backend.
//!
//! The adapter asks the backend for the conditional middle-block output of
//! the first consistency-model prediction. Any refinement steps the sampler
//! runs afterwards are executed but never captured.

mod backend;
pub mod mock;
pub mod remote;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use backend::{
    declare_backend, BackendInfo, BackendMode, DiffusionBackend, Injection, InjectionEvent, ModelBackendHandle,
    SamplingJob, SamplingOutput, StepSelection, BACKEND_ENDPOINT_ENV, INPUT_MIDDLE_BLOCK, OUTPUT_MIDDLE_BLOCK,
    SD15_SHAPE, SDXL_SHAPE,
};

use crate::error::{Error, Result};
use crate::hvector::{check_finite, HVector, PromptSpec, TimestepMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    /// Layer to capture; the backend's middle-block output when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_layer: Option<String>,
    /// Sampler steps run after the captured prediction and then discarded.
    #[serde(default)]
    pub num_refinement_steps_discarded: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            batch_size: 8,
            capture_layer: None,
            num_refinement_steps_discarded: 0,
        }
    }
}

impl ExtractionConfig {
    pub fn with_seeds(seeds: impl Into<Vec<u64>>) -> Self {
        Self {
            seeds: seeds.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::InvalidConfig(format!("duplicate seed {dup}")));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }

    fn layer(&self) -> &str {
        self.capture_layer.as_deref().unwrap_or(OUTPUT_MIDDLE_BLOCK)
    }
}

fn capture_job(prompt: &PromptSpec, config: &ExtractionConfig) -> SamplingJob {
    SamplingJob {
        prompt: prompt.clone(),
        steps: 1 + config.num_refinement_steps_discarded,
        capture_layer: Some(config.layer().to_string()),
        injection: None,
        decode: false,
    }
}

fn check_layer(config: &ExtractionConfig, backend: &ModelBackendHandle) -> Result<()> {
    let layer = config.layer();
    if backend.info().capture_layers.iter().any(|l| l == layer) {
        Ok(())
    } else {
        Err(Error::UnsupportedLayer {
            model_id: backend.model_id().to_string(),
            layer: layer.to_string(),
        })
    }
}

fn to_hvector(prompt: &PromptSpec, out: SamplingOutput, backend: &ModelBackendHandle) -> Result<HVector> {
    if out.capture_events != 1 {
        return Err(Error::CaptureCount {
            expected: 1,
            actual: out.capture_events,
        });
    }
    let declared = backend.middle_block_shape();
    let shape = out.capture_shape.unwrap_or(declared);
    if shape != declared {
        return Err(Error::ShapeMismatch {
            expected: declared,
            actual: shape,
        });
    }
    let values = out.capture.ok_or(Error::CaptureCount { expected: 1, actual: 0 })?;
    if values.len() != declared.len() {
        return Err(Error::LengthMismatch {
            expected: declared.len(),
            actual: values.len(),
        });
    }
    check_finite(&values)?;
    let timestep_mode = match backend.mode() {
        BackendMode::Lcm => TimestepMode::LcmSingleStep,
        BackendMode::Ldm => TimestepMode::LdmStep {
            t: out.capture_timestep,
        },
    };
    HVector::new(values, declared, prompt.clone(), backend.model_id(), timestep_mode)
}

/// Captures the H-space vector for one prompt at the prompt's own seed.
pub fn extract_hvector(
    prompt: &PromptSpec,
    config: &ExtractionConfig,
    backend: &ModelBackendHandle,
) -> Result<HVector> {
    prompt.validate()?;
    check_layer(config, backend)?;
    let out = backend.run(&capture_job(prompt, config))?;
    to_hvector(prompt, out, backend)
}

/// Extracts every prompt under every configured seed.
///
/// Output is grouped by prompt, then by seed in `config.seeds` order. The
/// prompt's own seed field is replaced by each configured seed.
pub fn extract_batch(
    prompts: &[PromptSpec],
    config: &ExtractionConfig,
    backend: &ModelBackendHandle,
) -> Result<Vec<HVector>> {
    if prompts.is_empty() {
        return Err(Error::EmptyBatch);
    }
    config.validate()?;
    check_layer(config, backend)?;

    let expanded: Vec<(usize, PromptSpec)> = prompts
        .iter()
        .enumerate()
        .flat_map(|(i, p)| config.seeds.iter().map(move |&s| (i, p.with_seed(s))))
        .collect();

    let mut result = Vec::with_capacity(expanded.len());
    for chunk in expanded.chunks(config.batch_size) {
        for (index, p) in chunk {
            p.validate().map_err(|e| Error::BatchElement {
                index: *index,
                source: Box::new(e),
            })?;
        }
        let jobs: Vec<SamplingJob> = chunk.iter().map(|(_, p)| capture_job(p, config)).collect();
        let outputs = backend.run_many(&jobs).map_err(|e| Error::BatchElement {
            index: chunk[0].0,
            source: Box::new(e),
        })?;
        for ((index, p), out) in chunk.iter().zip(outputs) {
            let v = to_hvector(p, out, backend).map_err(|e| Error::BatchElement {
                index: *index,
                source: Box::new(e),
            })?;
            result.push(v);
        }
    }
    Ok(result)
}
