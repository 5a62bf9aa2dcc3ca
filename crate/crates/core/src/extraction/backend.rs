use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hvector::{PromptSpec, Shape};

use super::mock::{MockBackend, MockKind};
use super::remote::RemoteBackend;

/// Layer name of the U-Net bottleneck output.
pub const OUTPUT_MIDDLE_BLOCK: &str = "output_middle_block";
/// Layer name of the U-Net bottleneck input.
pub const INPUT_MIDDLE_BLOCK: &str = "input_middle_block";

pub const SD15_SHAPE: Shape = Shape::new(1280, 8, 8);
pub const SDXL_SHAPE: Shape = Shape::new(1280, 32, 32);

/// Environment variable naming the HTTP inference service for real models.
pub const BACKEND_ENDPOINT_ENV: &str = "SCALEX_BACKEND_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    /// Consistency-model sampling (LCM-LoRA loaded).
    Lcm,
    /// Standard multi-step latent diffusion, no consistency adapter.
    Ldm,
}

impl BackendMode {
    pub fn default_steps(self) -> usize {
        match self {
            BackendMode::Lcm => 4,
            BackendMode::Ldm => 25,
        }
    }
}

impl fmt::Display for BackendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendMode::Lcm => "lcm",
            BackendMode::Ldm => "ldm",
        })
    }
}

impl FromStr for BackendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lcm" => Ok(BackendMode::Lcm),
            "ldm" => Ok(BackendMode::Ldm),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected lcm or ldm)"
            ))),
        }
    }
}

/// Static facts a backend declares about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub model_id: String,
    pub mode: BackendMode,
    pub middle_block_shape: Shape,
    /// Reference per-prompt extraction time on a single workstation GPU.
    pub latency_budget: Duration,
    pub capture_layers: Vec<String>,
    pub supports_injection: bool,
    /// True only when the consistency adapter is part of the sampling graph.
    pub lcm_adapter_loaded: bool,
}

/// Steps to inject at; `None` means every step.
pub type StepSelection = Option<Vec<usize>>;

/// An additive middle-block offset, already multiplied by its scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub offset: Arc<[f32]>,
    pub steps: StepSelection,
}

impl Injection {
    pub fn applies_at(&self, step: usize) -> bool {
        self.steps.as_ref().is_none_or(|s| s.contains(&step))
    }
}

/// One sampler invocation.
#[derive(Debug, Clone)]
pub struct SamplingJob {
    pub prompt: PromptSpec,
    pub steps: usize,
    /// Capture the conditional activation of this layer at the first prediction.
    pub capture_layer: Option<String>,
    pub injection: Option<Injection>,
    pub decode: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionEvent {
    pub step: usize,
    /// Batch rows the offset was added to (2 under classifier-free guidance).
    pub rows: usize,
    pub offset: Arc<[f32]>,
}

#[derive(Debug, Clone, Default)]
pub struct SamplingOutput {
    pub capture: Option<Vec<f32>>,
    pub capture_shape: Option<Shape>,
    pub capture_events: usize,
    /// Diffusion timestep of the captured prediction.
    pub capture_timestep: u32,
    pub forward_passes: usize,
    pub steps_executed: usize,
    pub injections: Vec<InjectionEvent>,
    /// PNG-encoded final image when decoding was requested.
    pub image_png: Option<Vec<u8>>,
}

/// A diffusion model with a reachable U-Net middle block.
pub trait DiffusionBackend: Send + Sync {
    fn info(&self) -> &BackendInfo;

    /// Runs the sampler for `job.steps` denoising steps.
    fn run(&self, job: &SamplingJob) -> Result<SamplingOutput>;
}

/// Shared handle to a declared backend. Device access is serialized.
#[derive(Clone)]
pub struct ModelBackendHandle {
    backend: Arc<dyn DiffusionBackend>,
    device: Arc<Mutex<()>>,
}

impl fmt::Debug for ModelBackendHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelBackendHandle").field("info", self.info()).finish()
    }
}

impl ModelBackendHandle {
    pub fn from_backend(backend: impl DiffusionBackend + 'static) -> Self {
        Self {
            backend: Arc::new(backend),
            device: Arc::new(Mutex::new(())),
        }
    }

    pub fn info(&self) -> &BackendInfo {
        self.backend.info()
    }

    pub fn model_id(&self) -> &str {
        &self.info().model_id
    }

    pub fn mode(&self) -> BackendMode {
        self.info().mode
    }

    pub fn middle_block_shape(&self) -> Shape {
        self.info().middle_block_shape
    }

    pub fn latency_budget(&self) -> Duration {
        self.info().latency_budget
    }

    pub fn run(&self, job: &SamplingJob) -> Result<SamplingOutput> {
        self.run_many(std::slice::from_ref(job))
            .map(|mut v| v.pop().expect("one job in, one output out"))
    }

    /// Runs jobs back to back under a single device acquisition.
    pub fn run_many(&self, jobs: &[SamplingJob]) -> Result<Vec<SamplingOutput>> {
        // A poisoned lock only means another caller panicked mid-run; the
        // guard protects no data.
        let _device = self.device.lock().unwrap_or_else(|e| e.into_inner());
        jobs.iter().map(|j| self.backend.run(j)).collect()
    }
}

/// Resolves a model id to a backend handle.
///
/// Known ids:
/// - `sd15`, `sdxl`: real models served over HTTP (see [`BACKEND_ENDPOINT_ENV`]).
/// - `mock`: bag-of-words mock with the SD1.5 bottleneck shape.
/// - `mock-<N>d`: bag-of-words mock with shape `(N, 1, 1)`.
/// - `mock-const-<N>d`: mock whose bottleneck is a constant unit-norm tensor.
pub fn declare_backend(model_id: &str, mode: BackendMode) -> Result<ModelBackendHandle> {
    let id = model_id.trim().to_ascii_lowercase();
    let remote = |shape: Shape, latency_ms: u64| {
        let endpoint = std::env::var(BACKEND_ENDPOINT_ENV).ok().filter(|s| !s.is_empty());
        ModelBackendHandle::from_backend(RemoteBackend::new(
            &id,
            mode,
            shape,
            Duration::from_millis(latency_ms),
            endpoint,
        ))
    };
    match id.as_str() {
        "sd15" | "sd1.5" | "stable-diffusion-v1-5" => return Ok(remote(SD15_SHAPE, 1100)),
        "sdxl" | "stable-diffusion-xl" => return Ok(remote(SDXL_SHAPE, 6300)),
        "mock" => {
            return Ok(ModelBackendHandle::from_backend(MockBackend::new(
                "mock",
                mode,
                SD15_SHAPE,
                MockKind::BagOfWords,
            )))
        }
        _ => {}
    }
    if let Some(dims) = parse_mock_dims(&id, "mock-const-") {
        return Ok(ModelBackendHandle::from_backend(MockBackend::new(
            &id,
            mode,
            Shape::new(dims, 1, 1),
            MockKind::ConstantUnit,
        )));
    }
    if let Some(dims) = parse_mock_dims(&id, "mock-") {
        return Ok(ModelBackendHandle::from_backend(MockBackend::new(
            &id,
            mode,
            Shape::new(dims, 1, 1),
            MockKind::BagOfWords,
        )));
    }
    const TRANSFORMER_FAMILIES: [&str; 5] = ["sd3", "flux", "pixart", "dit", "hunyuan"];
    if TRANSFORMER_FAMILIES.iter().any(|f| id.starts_with(f)) {
        return Err(Error::IncompatibleArchitecture(model_id.to_string()));
    }
    Err(Error::UnknownModel(model_id.to_string()))
}

fn parse_mock_dims(id: &str, prefix: &str) -> Option<usize> {
    let n: usize = id.strip_prefix(prefix)?.strip_suffix('d')?.parse().ok()?;
    (n > 0).then_some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sd15_declares_bottleneck_shape() {
        let h = declare_backend("sd15", BackendMode::Lcm).unwrap();
        assert_eq!(h.middle_block_shape(), Shape::new(1280, 8, 8));
        assert_eq!(h.latency_budget(), Duration::from_millis(1100));
    }

    #[test]
    fn sdxl_declares_bottleneck_shape() {
        let h = declare_backend("sdxl", BackendMode::Lcm).unwrap();
        assert_eq!(h.middle_block_shape(), Shape::new(1280, 32, 32));
    }

    #[test]
    fn mock_dims_from_id() {
        let h = declare_backend("mock-8d", BackendMode::Lcm).unwrap();
        assert_eq!(h.middle_block_shape(), Shape::new(8, 1, 1));
        assert!(h.info().lcm_adapter_loaded);
        let h = declare_backend("mock-8d", BackendMode::Ldm).unwrap();
        assert!(!h.info().lcm_adapter_loaded);
    }

    #[test]
    fn unknown_and_incompatible_models() {
        assert!(matches!(
            declare_backend("nonesuch", BackendMode::Lcm),
            Err(Error::UnknownModel(_))
        ));
        assert!(matches!(
            declare_backend("flux-dev", BackendMode::Lcm),
            Err(Error::IncompatibleArchitecture(_))
        ));
        assert!(matches!(
            declare_backend("mock-0d", BackendMode::Lcm),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn mode_parses() {
        assert_eq!("ldm".parse::<BackendMode>().unwrap(), BackendMode::Ldm);
        assert!("ldm-transfer".parse::<BackendMode>().is_err());
    }
}
