//! Deterministic stand-in for a latent diffusion U-Net.
//!
//! The bag-of-words mock maps every lowercase token to a fixed Gaussian
//! direction derived from its hash, so prompts that share words share
//! direction. A small lexicon ties gendered words to shared anchor
//! directions. Seeds contribute per-step Gaussian noise. Everything is a
//! pure function of (model id, prompt, seed, step), which is what lets the
//! analysis suite run without model weights.

use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hvector::Shape;

use super::backend::{
    BackendInfo, BackendMode, DiffusionBackend, InjectionEvent, SamplingJob, SamplingOutput, INPUT_MIDDLE_BLOCK,
    OUTPUT_MIDDLE_BLOCK,
};

pub const IMAGE_SIDE: u32 = 16;

const FEMININE: [&str; 10] = [
    "female", "woman", "women", "she", "her", "sarah", "ms", "girl", "lady", "mrs",
];
const MASCULINE: [&str; 10] = [
    "male",
    "man",
    "men",
    "he",
    "his",
    "john",
    "mr",
    "boy",
    "gentleman",
    "him",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockKind {
    BagOfWords,
    /// Every middle-block activation is the constant `1/sqrt(len)`.
    ConstantUnit,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    info: BackendInfo,
    kind: MockKind,
}

impl MockBackend {
    pub fn new(model_id: &str, mode: BackendMode, shape: Shape, kind: MockKind) -> Self {
        Self {
            info: BackendInfo {
                model_id: model_id.to_string(),
                mode,
                middle_block_shape: shape,
                latency_budget: Duration::from_millis(50),
                capture_layers: vec![OUTPUT_MIDDLE_BLOCK.into(), INPUT_MIDDLE_BLOCK.into()],
                supports_injection: true,
                lcm_adapter_loaded: mode == BackendMode::Lcm,
            },
            kind,
        }
    }

    pub fn kind(&self) -> MockKind {
        self.kind
    }

    fn dims(&self) -> usize {
        self.info.middle_block_shape.len()
    }

    /// Text embedding: normalized sum of token directions.
    fn embed(&self, text: &str) -> Vec<f64> {
        let d = self.dims();
        let mut acc = vec![0.0f64; d];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return acc;
        }
        for tok in &tokens {
            let own = gaussian(&[b"token", tok.as_bytes()], d);
            let anchor = if FEMININE.contains(&tok.as_str()) {
                Some(gaussian(&[b"anchor", b"feminine"], d))
            } else if MASCULINE.contains(&tok.as_str()) {
                Some(gaussian(&[b"anchor", b"masculine"], d))
            } else {
                None
            };
            match anchor {
                Some(a) => {
                    for ((s, o), a) in acc.iter_mut().zip(&own).zip(&a) {
                        *s += 0.8 * o + 0.6 * a;
                    }
                }
                None => {
                    for (s, o) in acc.iter_mut().zip(&own) {
                        *s += o;
                    }
                }
            }
        }
        let k = 1.0 / (tokens.len() as f64).sqrt();
        acc.iter_mut().for_each(|x| *x *= k);
        acc
    }

    fn noise_level(&self, step: usize, steps: usize) -> f64 {
        match self.info.mode {
            BackendMode::Lcm => 0.5 * 0.5f64.powi(step as i32),
            BackendMode::Ldm => 1.0 - step as f64 / steps as f64 + 0.05,
        }
    }
}

pub(crate) fn timestep_at(step: usize, steps: usize) -> u32 {
    let stride = 1000 / steps.max(1);
    999u32.saturating_sub((step * stride) as u32)
}

impl DiffusionBackend for MockBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn run(&self, job: &SamplingJob) -> Result<SamplingOutput> {
        if job.steps == 0 {
            return Err(Error::InvalidConfig("sampler needs at least one step".into()));
        }
        let capture_input = match job.capture_layer.as_deref() {
            None | Some(OUTPUT_MIDDLE_BLOCK) => false,
            Some(INPUT_MIDDLE_BLOCK) => true,
            Some(other) => {
                return Err(Error::UnsupportedLayer {
                    model_id: self.info.model_id.clone(),
                    layer: other.to_string(),
                })
            }
        };
        let d = self.dims();
        if let Some(inj) = &job.injection {
            if inj.offset.len() != d {
                return Err(Error::LengthMismatch {
                    expected: d,
                    actual: inj.offset.len(),
                });
            }
        }

        let cfg = job.prompt.uses_cfg();
        let cond = self.embed(&job.prompt.text);
        let uncond = self.embed(job.prompt.negative_text.as_deref().unwrap_or(""));
        let g = job.prompt.guidance_scale;
        let seed = job.prompt.seed.to_le_bytes();

        let mut out = SamplingOutput::default();
        let mut state = vec![0.0f64; d];
        for step in 0..job.steps {
            let sigma = self.noise_level(step, job.steps);
            let noise = gaussian(&[b"noise", &seed, &(step as u64).to_le_bytes()], d);
            let rows: Vec<&Vec<f64>> = if cfg { vec![&cond, &uncond] } else { vec![&cond] };

            // One batched U-Net forward per step; row 0 is conditional.
            let mut inputs: Vec<Vec<f32>> = Vec::with_capacity(rows.len());
            let mut outputs: Vec<Vec<f32>> = Vec::with_capacity(rows.len());
            for e in rows {
                let (h_in, h_out): (Vec<f32>, Vec<f32>) = match self.kind {
                    MockKind::ConstantUnit => {
                        let c = (1.0 / (d as f64).sqrt()) as f32;
                        (vec![c; d], vec![c; d])
                    }
                    MockKind::BagOfWords => (0..d)
                        .map(|k| {
                            let u = e[k] + sigma * noise[k] + 0.1 * state[k];
                            (u as f32, (1.25 * u) as f32)
                        })
                        .unzip(),
                };
                inputs.push(h_in);
                outputs.push(h_out);
            }
            out.forward_passes += 1;

            if let Some(inj) = job.injection.as_ref().filter(|i| i.applies_at(step)) {
                for row in outputs.iter_mut() {
                    for (h, o) in row.iter_mut().zip(inj.offset.iter()) {
                        *h += *o;
                    }
                }
                out.injections.push(InjectionEvent {
                    step,
                    rows: outputs.len(),
                    offset: Arc::clone(&inj.offset),
                });
            }

            if step == 0 && job.capture_layer.is_some() {
                let src = if capture_input { &inputs[0] } else { &outputs[0] };
                out.capture = Some(src.clone());
                out.capture_shape = Some(self.info.middle_block_shape);
                out.capture_events += 1;
                out.capture_timestep = timestep_at(0, job.steps);
            }

            state = if cfg {
                outputs[1]
                    .iter()
                    .zip(&outputs[0])
                    .map(|(&u, &c)| f64::from(u) + g * (f64::from(c) - f64::from(u)))
                    .collect()
            } else {
                outputs[0].iter().map(|&c| f64::from(c)).collect()
            };
            out.steps_executed += 1;
        }

        if job.decode {
            out.image_png = Some(decode_png(&state)?);
        }
        Ok(out)
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn gaussian(parts: &[&[u8]], n: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(b"scalex-mock-v1");
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    let seed: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Stand-in VAE decoder: folds the latent onto a small RGB grid.
fn decode_png(latent: &[f64]) -> Result<Vec<u8>> {
    let channels = (IMAGE_SIDE * IMAGE_SIDE * 3) as usize;
    let d = latent.len();
    let mut px = vec![0u8; channels];
    for (q, p) in px.iter_mut().enumerate() {
        let v = if d >= channels {
            let (sum, count) = latent
                .iter()
                .skip(q)
                .step_by(channels)
                .fold((0.0, 0usize), |(s, c), &x| (s + x, c + 1));
            sum / (count as f64).sqrt()
        } else {
            latent[q % d] * (1.0 + (q / d) as f64 * 0.01)
        };
        *p = (255.0 / (1.0 + (-v).exp())).round() as u8;
    }
    let img = image::RgbImage::from_raw(IMAGE_SIDE, IMAGE_SIDE, px).expect("buffer sized for image");
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| Error::Engine(format!("png encoding failed: {e}")))?;
    Ok(buf.into_inner())
}
