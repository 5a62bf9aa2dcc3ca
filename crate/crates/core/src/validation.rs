//! Checking vector-space bias scores against zero-shot image classification.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compare::{variant_correlation, Correlation};
use crate::error::{Error, Result};
use crate::http::JsonEndpoint;

pub const CLIP_ENDPOINT_ENV: &str = "SCALEX_CLIP_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationProtocol {
    pub name: String,
    pub class_prompts: Vec<String>,
}

impl Default for ClassificationProtocol {
    fn default() -> Self {
        Self::gender()
    }
}

impl ClassificationProtocol {
    pub fn new(name: impl Into<String>, class_prompts: Vec<String>) -> Result<Self> {
        let p = Self {
            name: name.into(),
            class_prompts,
        };
        p.validate()?;
        Ok(p)
    }

    /// Class 0 is male, class 1 is female.
    pub fn gender() -> Self {
        Self {
            name: "gender".into(),
            class_prompts: vec!["a photo of a man".into(), "a photo of a woman".into()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_prompts.len() < 2 {
            return Err(Error::InvalidConfig(
                "a protocol needs at least two class prompts".into(),
            ));
        }
        for (i, p) in self.class_prompts.iter().enumerate() {
            if p.trim().is_empty() {
                return Err(Error::InvalidConfig(format!("class prompt {i} is empty")));
            }
            if self.class_prompts[..i].contains(p) {
                return Err(Error::InvalidConfig(format!("class prompt `{p}` is repeated")));
            }
        }
        Ok(())
    }

    /// Index of `name`, either a class prompt or its last word (`woman`).
    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.class_prompts
            .iter()
            .position(|p| p == name || p.rsplit(' ').next() == Some(name))
            .ok_or_else(|| Error::InvalidConfig(format!("protocol `{}` has no class `{name}`", self.name)))
    }
}

/// Image-text similarity scorer.
pub trait Classifier: Send + Sync {
    fn model(&self) -> &str;

    /// One similarity per prompt, in prompt order.
    fn similarities(&self, image_png: &[u8], class_prompts: &[String]) -> Result<Vec<f64>>;
}

pub fn image_sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Classifier service reached over HTTP.
///
/// Request: `{"image_b64": .., "texts": [..]}`. Response: `{"similarities": [..]}`
/// or a CLIP-style `{"logits_per_image": [[..]]}`.
pub struct HttpClassifier {
    endpoint: JsonEndpoint,
    model: String,
}

impl HttpClassifier {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: JsonEndpoint::new(url, timeout),
            model: model.into(),
        }
    }

    pub fn from_env() -> Result<Self> {
        let url = std::env::var(CLIP_ENDPOINT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::EndpointUnavailable(format!("{CLIP_ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(url, "clip", Duration::from_secs(60)))
    }
}

fn parse_similarities(raw: &str) -> Result<Vec<f64>> {
    let v: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| Error::BadResponse(format!("classifier response: {e}")))?;
    let arr = v
        .get("similarities")
        .or_else(|| v.pointer("/logits_per_image/0"))
        .and_then(|a| a.as_array())
        .ok_or_else(|| Error::BadResponse("classifier response has no similarities".into()))?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Error::BadResponse("non-numeric similarity".into()))
        })
        .collect()
}

impl Classifier for HttpClassifier {
    fn model(&self) -> &str {
        &self.model
    }

    fn similarities(&self, image_png: &[u8], class_prompts: &[String]) -> Result<Vec<f64>> {
        let body = serde_json::json!({
            "image_b64": base64::engine::general_purpose::STANDARD.encode(image_png),
            "texts": class_prompts,
        });
        parse_similarities(&self.endpoint.post(&body.to_string())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedScores {
    pub class_prompts: Vec<String>,
    pub similarities: Vec<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ClassifierRecording {
    model: String,
    responses: BTreeMap<String, RecordedScores>,
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn model(&self) -> &str {
        (**self).model()
    }

    fn similarities(&self, image_png: &[u8], class_prompts: &[String]) -> Result<Vec<f64>> {
        (**self).similarities(image_png, class_prompts)
    }
}

/// Serves similarities recorded earlier, keyed by the image's SHA-256.
#[derive(Debug, Default)]
pub struct ReplayClassifier {
    rec: ClassifierRecording,
}

impl ReplayClassifier {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            rec: serde_json::from_str(&text)?,
        })
    }
}

impl Classifier for ReplayClassifier {
    fn model(&self) -> &str {
        &self.rec.model
    }

    fn similarities(&self, image_png: &[u8], class_prompts: &[String]) -> Result<Vec<f64>> {
        let key = image_sha256(image_png);
        match self.rec.responses.get(&key) {
            Some(r) if r.class_prompts == class_prompts => Ok(r.similarities.clone()),
            Some(_) => Err(Error::EndpointUnavailable(format!(
                "recording for image {key} used different class prompts"
            ))),
            None => Err(Error::EndpointUnavailable(format!(
                "no recorded response for image {key}"
            ))),
        }
    }
}

/// Forwards to another classifier and keeps every response for replay.
pub struct RecordingClassifier<C> {
    inner: C,
    log: Mutex<BTreeMap<String, RecordedScores>>,
}

impl<C: Classifier> RecordingClassifier<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let rec = ClassifierRecording {
            model: self.inner.model().to_string(),
            responses: self.log.lock().unwrap_or_else(|e| e.into_inner()).clone(),
        };
        let text = serde_json::to_string_pretty(&rec)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl<C: Classifier> Classifier for RecordingClassifier<C> {
    fn model(&self) -> &str {
        self.inner.model()
    }

    fn similarities(&self, image_png: &[u8], class_prompts: &[String]) -> Result<Vec<f64>> {
        let s = self.inner.similarities(image_png, class_prompts)?;
        self.log.lock().unwrap_or_else(|e| e.into_inner()).insert(
            image_sha256(image_png),
            RecordedScores {
                class_prompts: class_prompts.to_vec(),
                similarities: s.clone(),
            },
        );
        Ok(s)
    }
}

/// Returns the same similarities for every image.
#[derive(Debug, Clone)]
pub struct FixedClassifier(pub Vec<f64>);

impl Classifier for FixedClassifier {
    fn model(&self) -> &str {
        "fixed"
    }

    fn similarities(&self, _: &[u8], _: &[String]) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::BadResponse("non-finite similarity".into()));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn classify_image(image: &[u8], protocol: &ClassificationProtocol, classifier: &dyn Classifier) -> Result<usize> {
    protocol.validate()?;
    image::load_from_memory(image).map_err(|e| Error::UndecodableImage(e.to_string()))?;
    let s = classifier.similarities(image, &protocol.class_prompts)?;
    if s.len() != protocol.class_prompts.len() {
        return Err(Error::BadResponse(format!(
            "expected {} similarities, got {}",
            protocol.class_prompts.len(),
            s.len()
        )));
    }
    argmax(&s)
}

/// Classifies `images` on up to `concurrency` threads; labels keep input order.
pub fn classify_batch(
    images: &[Vec<u8>],
    protocol: &ClassificationProtocol,
    classifier: &dyn Classifier,
    concurrency: usize,
) -> Result<Vec<usize>> {
    if images.is_empty() {
        return Err(Error::EmptyInput);
    }
    protocol.validate()?;
    let slots: Vec<Mutex<Option<Result<usize>>>> = images.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..concurrency.clamp(1, images.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(img) = images.get(k) else { break };
                let r = classify_image(img, protocol, classifier);
                *slots[k].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .enumerate()
        .map(|(index, m)| {
            m.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every slot is filled")
                .map_err(|e| Error::BatchElement {
                    index,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Percentage of `labels` equal to `target`.
pub fn percent_of(labels: &[usize], target: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = labels.iter().filter(|&&l| l == target).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// Percentage of `images` classified as `target_class`.
pub fn percent_attribute(
    images: &[Vec<u8>],
    protocol: &ClassificationProtocol,
    classifier: &dyn Classifier,
    target_class: usize,
    concurrency: usize,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyInput);
    }
    if target_class >= protocol.class_prompts.len() {
        return Err(Error::BadIndex {
            index: target_class,
            len: protocol.class_prompts.len(),
        });
    }
    percent_of(
        &classify_batch(images, protocol, classifier, concurrency)?,
        target_class,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePercentage {
    pub prompt_id: String,
    pub percent: f64,
    pub n_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptValidation {
    pub prompt_id: String,
    pub percent_class: f64,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub per_prompt: Vec<PromptValidation>,
    /// Correlation of delta against percentage across prompts.
    pub correlation: Correlation,
    pub n_images: usize,
}

/// Pairs each prompt's delta with its image percentage and correlates them.
///
/// `deltas` and `percentages` must cover the same prompt ids; the report
/// follows the order of `deltas`.
pub fn validate_bias(deltas: &[(String, f64)], percentages: &[ImagePercentage]) -> Result<ValidationReport> {
    if deltas.len() != percentages.len() {
        return Err(Error::LengthMismatch {
            expected: deltas.len(),
            actual: percentages.len(),
        });
    }
    let by_id: BTreeMap<&str, &ImagePercentage> = percentages.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
    if by_id.len() != percentages.len() {
        return Err(Error::InvalidConfig("duplicate prompt id in image percentages".into()));
    }
    let mut per_prompt = Vec::with_capacity(deltas.len());
    let mut n_images = 0;
    for (id, d) in deltas {
        let p = by_id.get(id.as_str()).ok_or_else(|| Error::UnknownId(id.clone()))?;
        if !(0.0..=100.0).contains(&p.percent) {
            return Err(Error::InvalidConfig(format!(
                "percentage {} for `{id}` is outside [0, 100]",
                p.percent
            )));
        }
        n_images += p.n_images;
        per_prompt.push(PromptValidation {
            prompt_id: id.clone(),
            percent_class: p.percent,
            mean_delta: *d,
        });
    }
    let xs: Vec<f64> = per_prompt.iter().map(|p| p.mean_delta).collect();
    let ys: Vec<f64> = per_prompt.iter().map(|p| p.percent_class).collect();
    Ok(ValidationReport {
        correlation: variant_correlation(&xs, &ys)?,
        per_prompt,
        n_images,
    })
}
