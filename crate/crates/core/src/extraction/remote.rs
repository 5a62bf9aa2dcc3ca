//! Client for a model served by an external inference process.
//!
//! Wire format (`POST {endpoint}/v1/sample`, JSON both ways):
//!
//! ```text
//! request  { model_id, mode, prompt: PromptSpec, steps, capture_layer?,
//!            injection?: { offset_f32le_b64, steps? }, decode }
//! response { capture_f32le_b64?, capture_shape?: [c, h, w], capture_events,
//!            capture_timestep, forward_passes, steps_executed,
//!            injection_steps: [..], injection_rows, image_png_b64? }
//! ```
//!
//! Float arrays travel as base64 of little-endian IEEE-754 float32, the same
//! byte layout as the vector store.

use std::sync::Arc;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::JsonEndpoint;
use crate::hvector::{PromptSpec, Shape};

use super::backend::{
    BackendInfo, BackendMode, DiffusionBackend, InjectionEvent, SamplingJob, SamplingOutput, INPUT_MIDDLE_BLOCK,
    OUTPUT_MIDDLE_BLOCK,
};

#[derive(Debug, Serialize, Deserialize)]
pub struct WireInjection {
    pub offset_f32le_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SampleRequest {
    pub model_id: String,
    pub mode: BackendMode,
    pub prompt: PromptSpec,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<WireInjection>,
    pub decode: bool,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SampleResponse {
    #[serde(default)]
    pub capture_f32le_b64: Option<String>,
    #[serde(default)]
    pub capture_shape: Option<[usize; 3]>,
    #[serde(default)]
    pub capture_events: usize,
    #[serde(default)]
    pub capture_timestep: u32,
    #[serde(default)]
    pub forward_passes: usize,
    pub steps_executed: usize,
    #[serde(default)]
    pub injection_steps: Vec<usize>,
    #[serde(default)]
    pub injection_rows: usize,
    #[serde(default)]
    pub image_png_b64: Option<String>,
}

pub fn encode_f32le(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_f32le(text: &str) -> Result<Vec<f32>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::BadResponse(format!("bad base64 float payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::BadResponse(format!(
            "float payload of {} bytes is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[derive(Debug)]
pub struct RemoteBackend {
    info: BackendInfo,
    endpoint: Option<JsonEndpoint>,
}

impl RemoteBackend {
    pub fn new(
        model_id: &str,
        mode: BackendMode,
        shape: Shape,
        latency_budget: Duration,
        endpoint: Option<String>,
    ) -> Self {
        let endpoint = endpoint.map(|base| {
            JsonEndpoint::new(
                format!("{}/v1/sample", base.trim_end_matches('/')),
                Duration::from_secs(600),
            )
        });
        Self {
            info: BackendInfo {
                model_id: model_id.to_string(),
                mode,
                middle_block_shape: shape,
                latency_budget,
                capture_layers: vec![OUTPUT_MIDDLE_BLOCK.into(), INPUT_MIDDLE_BLOCK.into()],
                supports_injection: true,
                lcm_adapter_loaded: mode == BackendMode::Lcm,
            },
            endpoint,
        }
    }

    pub fn request_for(&self, job: &SamplingJob) -> SampleRequest {
        SampleRequest {
            model_id: self.info.model_id.clone(),
            mode: self.info.mode,
            prompt: job.prompt.clone(),
            steps: job.steps,
            capture_layer: job.capture_layer.clone(),
            injection: job.injection.as_ref().map(|inj| WireInjection {
                offset_f32le_b64: encode_f32le(&inj.offset),
                steps: inj.steps.clone(),
            }),
            decode: job.decode,
        }
    }
}

impl DiffusionBackend for RemoteBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn run(&self, job: &SamplingJob) -> Result<SamplingOutput> {
        let endpoint = self.endpoint.as_ref().ok_or_else(|| {
            Error::BackendUnavailable(format!(
                "model `{}` is not loaded; set {} to an inference service",
                self.info.model_id,
                super::backend::BACKEND_ENDPOINT_ENV
            ))
        })?;
        let body = serde_json::to_string(&self.request_for(job))?;
        let raw = endpoint.post(&body).map_err(|e| match e {
            Error::EndpointUnavailable(m) | Error::Timeout(m) => Error::BackendUnavailable(m),
            other => other,
        })?;
        let resp: SampleResponse =
            serde_json::from_str(&raw).map_err(|e| Error::BadResponse(format!("sample response: {e}")))?;
        response_to_output(resp, job)
    }
}

fn response_to_output(resp: SampleResponse, job: &SamplingJob) -> Result<SamplingOutput> {
    let capture = resp.capture_f32le_b64.as_deref().map(decode_f32le).transpose()?;
    let image_png = resp
        .image_png_b64
        .map(|s| {
            B64.decode(s)
                .map_err(|e| Error::BadResponse(format!("bad base64 image: {e}")))
        })
        .transpose()?;
    let injections = match &job.injection {
        Some(inj) => resp
            .injection_steps
            .iter()
            .map(|&step| InjectionEvent {
                step,
                rows: resp.injection_rows,
                offset: Arc::clone(&inj.offset),
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(SamplingOutput {
        capture,
        capture_shape: resp.capture_shape.map(|[c, h, w]| Shape::new(c, h, w)),
        capture_events: resp.capture_events,
        capture_timestep: resp.capture_timestep,
        forward_passes: resp.forward_passes,
        steps_executed: resp.steps_executed,
        injections,
        image_png,
    })
}
