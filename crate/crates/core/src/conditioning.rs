//! Steering generation by adding weighted combinations of stored vectors to
//! the middle block.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::atlas::ConceptAtlas;
use crate::error::{Error, Result};
use crate::extraction::{BackendMode, Injection, InjectionEvent, ModelBackendHandle, SamplingJob, StepSelection};
use crate::hvector::{HVector, PromptSpec, Shape, TimestepMode};
use crate::store::{keys, tags, VectorStore};

/// Prefix selecting the mean of an atlas cluster, as in `cluster:3`.
pub const CLUSTER_PREFIX: &str = "cluster:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionTerm {
    /// A record id, a `key` tag value, or `cluster:<N>`.
    pub source: String,
    pub weight: f64,
}

impl DirectionTerm {
    pub fn new(source: impl Into<String>, weight: f64) -> Self {
        Self {
            source: source.into(),
            weight,
        }
    }
}

impl std::str::FromStr for DirectionTerm {
    type Err = Error;

    /// Parses `source`, `+source`, `-source` or `source*weight`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (sign, rest) = match s.as_bytes().first() {
            Some(b'-') => (-1.0, &s[1..]),
            Some(b'+') => (1.0, &s[1..]),
            _ => (1.0, s),
        };
        let (source, weight) = match rest.rsplit_once('*') {
            Some((src, w)) => {
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad weight in term `{s}`")))?;
                (src.trim(), w)
            }
            None => (rest.trim(), 1.0),
        };
        if source.is_empty() {
            return Err(Error::InvalidConfig(format!("empty term `{s}`")));
        }
        Ok(Self::new(source, sign * weight))
    }
}

/// A vector looked up for one term.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTerm {
    pub values: Vec<f64>,
    pub shape: Shape,
    pub timestep_mode: TimestepMode,
}

impl From<&HVector> for ResolvedTerm {
    fn from(v: &HVector) -> Self {
        Self {
            values: v.values.iter().map(|&x| f64::from(x)).collect(),
            shape: v.shape,
            timestep_mode: v.timestep_mode,
        }
    }
}

pub trait TermResolver {
    fn resolve(&self, source: &str) -> Result<ResolvedTerm>;
}

impl TermResolver for BTreeMap<String, HVector> {
    fn resolve(&self, source: &str) -> Result<ResolvedTerm> {
        self.get(source)
            .map(ResolvedTerm::from)
            .ok_or_else(|| Error::UnknownId(source.to_string()))
    }
}

fn mean_of(vs: &[HVector]) -> Result<ResolvedTerm> {
    let first = vs.first().ok_or(Error::EmptyInput)?;
    let mut acc = vec![0.0f64; first.len()];
    for v in vs {
        first.ensure_same_shape(v)?;
        for (a, &x) in acc.iter_mut().zip(&v.values) {
            *a += f64::from(x);
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(ResolvedTerm {
        values: acc,
        shape: first.shape,
        timestep_mode: first.timestep_mode,
    })
}

/// Resolves terms against a store and, for `cluster:<N>`, an atlas built over it.
///
/// A source that is not a record id is matched against the `key` tag; every
/// record carrying that key (typically one per seed) is averaged.
pub struct StoreResolver<'a> {
    pub store: &'a VectorStore,
    pub atlas: Option<&'a ConceptAtlas>,
}

impl TermResolver for StoreResolver<'_> {
    fn resolve(&self, source: &str) -> Result<ResolvedTerm> {
        if let Some(n) = source.strip_prefix(CLUSTER_PREFIX) {
            let atlas = self
                .atlas
                .ok_or_else(|| Error::UnknownId(format!("{source} (no atlas loaded)")))?;
            let c: i32 = n.trim().parse().map_err(|_| Error::UnknownId(source.to_string()))?;
            let members = atlas.members(c);
            if c < 0 || members.is_empty() {
                return Err(Error::UnknownId(source.to_string()));
            }
            let vs = members
                .iter()
                .map(|id| self.store.get(id).map(|r| r.hvector))
                .collect::<Result<Vec<_>>>()?;
            return mean_of(&vs);
        }
        if self.store.contains(source) {
            return Ok(ResolvedTerm::from(&self.store.get(source)?.hvector));
        }
        let recs = self.store.query(&tags([(keys::KEY, source)]))?;
        if recs.is_empty() {
            return Err(Error::UnknownId(source.to_string()));
        }
        let vs: Vec<HVector> = recs.into_iter().map(|r| r.hvector).collect();
        mean_of(&vs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionExpr {
    pub terms: Vec<DirectionTerm>,
    pub shape: Shape,
    /// Capture regime of every referenced vector, in term order.
    pub source_modes: Vec<TimestepMode>,
    /// Sum of weight times vector, accumulated in f64.
    #[serde(skip)]
    pub resolved: Vec<f64>,
}

impl DirectionExpr {
    pub fn norm(&self) -> f64 {
        self.resolved.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// The offset `scale * resolved` as sent to the backend.
    ///
    /// Zero entries are emitted as `-0.0`, the additive identity for every
    /// f32 including `-0.0`, so a zero scale leaves activations bit-identical.
    pub fn offset(&self, scale: f64) -> Vec<f32> {
        self.resolved
            .iter()
            .map(|&x| {
                let o = (scale * x) as f32;
                if o == 0.0 {
                    -0.0
                } else {
                    o
                }
            })
            .collect()
    }
}

/// Resolves `terms` and sums them.
pub fn compose_direction(terms: &[DirectionTerm], resolver: &dyn TermResolver) -> Result<DirectionExpr> {
    if terms.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut shape: Option<Shape> = None;
    let mut resolved: Vec<f64> = Vec::new();
    let mut source_modes = Vec::with_capacity(terms.len());
    for t in terms {
        if !t.weight.is_finite() {
            return Err(Error::InvalidConfig(format!("weight of `{}` is not finite", t.source)));
        }
        let r = resolver.resolve(&t.source)?;
        match shape {
            None => {
                shape = Some(r.shape);
                resolved = vec![0.0; r.values.len()];
            }
            Some(s) if s != r.shape => {
                return Err(Error::ShapeMismatch {
                    expected: s,
                    actual: r.shape,
                })
            }
            Some(_) => {}
        }
        for (acc, &x) in resolved.iter_mut().zip(&r.values) {
            *acc += t.weight * x;
        }
        source_modes.push(r.timestep_mode);
    }
    Ok(DirectionExpr {
        terms: terms.to_vec(),
        shape: shape.expect("terms is non-empty"),
        source_modes,
        resolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Inject into the consistency-model sampler the vectors came from.
    #[default]
    Lcm,
    /// Inject consistency-model offsets into a standard multi-step sampler.
    LdmTransfer,
}

impl std::str::FromStr for ConditioningMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lcm" => Ok(Self::Lcm),
            "ldm_transfer" | "ldm-transfer" => Ok(Self::LdmTransfer),
            other => Err(Error::InvalidConfig(format!(
                "unknown conditioning mode `{other}` (expected lcm or ldm_transfer)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRun {
    pub base_prompt: PromptSpec,
    pub direction: DirectionExpr,
    pub scale: f64,
    pub mode: ConditioningMode,
    /// Sampler steps; the backend mode's default when unset.
    pub steps: Option<usize>,
    /// Steps to inject at; every step when unset.
    pub inject_steps: StepSelection,
    pub output_image_path: Option<PathBuf>,
}

impl ConditioningRun {
    pub fn new(base_prompt: PromptSpec, direction: DirectionExpr, scale: f64, mode: ConditioningMode) -> Self {
        Self {
            base_prompt,
            direction,
            scale,
            mode,
            steps: None,
            inject_steps: None,
            output_image_path: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionedImage {
    pub png: Vec<u8>,
    pub steps_executed: usize,
    pub forward_passes: usize,
    pub injections: Vec<InjectionEvent>,
}

fn check_mode(run: &ConditioningRun, handle: &ModelBackendHandle) -> Result<()> {
    let info = handle.info();
    match run.mode {
        ConditioningMode::Lcm if info.mode != BackendMode::Lcm => Err(Error::ModeMismatch(format!(
            "lcm conditioning needs an lcm backend, `{}` is {}",
            info.model_id, info.mode
        ))),
        ConditioningMode::LdmTransfer if info.mode != BackendMode::Ldm || info.lcm_adapter_loaded => {
            Err(Error::ModeMismatch(format!(
                "ldm_transfer needs a plain ldm backend without the consistency adapter, `{}` is {}",
                info.model_id, info.mode
            )))
        }
        ConditioningMode::LdmTransfer => {
            match run
                .direction
                .source_modes
                .iter()
                .find(|m| **m != TimestepMode::LcmSingleStep)
            {
                Some(m) => Err(Error::ModeMismatch(format!(
                    "ldm_transfer offsets must come from lcm captures, found {m:?}"
                ))),
                None => Ok(()),
            }
        }
        ConditioningMode::Lcm => Ok(()),
    }
}

fn decoded(
    out: crate::extraction::SamplingOutput,
    model_id: &str,
) -> Result<(Vec<u8>, crate::extraction::SamplingOutput)> {
    let mut out = out;
    let png = out
        .image_png
        .take()
        .ok_or_else(|| Error::BadResponse(format!("backend `{model_id}` returned no image")))?;
    Ok((png, out))
}

/// Unconditioned image for `prompt`.
pub fn generate_baseline(prompt: &PromptSpec, steps: Option<usize>, handle: &ModelBackendHandle) -> Result<Vec<u8>> {
    prompt.validate()?;
    let job = SamplingJob {
        prompt: prompt.clone(),
        steps: steps.unwrap_or_else(|| handle.mode().default_steps()),
        capture_layer: None,
        injection: None,
        decode: true,
    };
    decoded(handle.run(&job)?, handle.model_id()).map(|(png, _)| png)
}

/// Generates `run.base_prompt` with `run.scale * direction` added to the
/// middle-block output at the selected steps, and writes the PNG to
/// `run.output_image_path` when set.
pub fn conditioned_generate(run: &ConditioningRun, handle: &ModelBackendHandle) -> Result<ConditionedImage> {
    if !run.scale.is_finite() {
        return Err(Error::InvalidConfig(format!("scale {} is not finite", run.scale)));
    }
    run.base_prompt.validate()?;
    let info = handle.info();
    if !info.supports_injection {
        return Err(Error::InjectionUnsupported(info.model_id.clone()));
    }
    check_mode(run, handle)?;
    if run.direction.shape != info.middle_block_shape {
        return Err(Error::ShapeMismatch {
            expected: info.middle_block_shape,
            actual: run.direction.shape,
        });
    }
    if run.direction.resolved.len() != run.direction.shape.len() {
        return Err(Error::InvalidConfig("direction is not resolved".into()));
    }
    let steps = run.steps.unwrap_or_else(|| info.mode.default_steps());
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    let expected = match &run.inject_steps {
        None => steps,
        Some(sel) => {
            if let Some(&bad) = sel.iter().find(|&&s| s >= steps) {
                return Err(Error::BadIndex { index: bad, len: steps });
            }
            let mut s = sel.clone();
            s.sort_unstable();
            s.dedup();
            s.len()
        }
    };
    let job = SamplingJob {
        prompt: run.base_prompt.clone(),
        steps,
        capture_layer: None,
        injection: Some(Injection {
            offset: Arc::from(run.direction.offset(run.scale)),
            steps: run.inject_steps.clone(),
        }),
        decode: true,
    };
    let (png, out) = decoded(handle.run(&job)?, &info.model_id)?;
    if out.injections.len() != expected {
        return Err(Error::BadResponse(format!(
            "expected {expected} injection(s), backend reported {}",
            out.injections.len()
        )));
    }
    if let Some(path) = &run.output_image_path {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, &png).map_err(|e| Error::io(path, e))?;
    }
    Ok(ConditionedImage {
        png,
        steps_executed: out.steps_executed,
        forward_passes: out.forward_passes,
        injections: out.injections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{AtlasConfig, ClusterSpace};
    use crate::extraction::{declare_backend, ExtractionConfig};
    use crate::store::VectorRecord;
    use proptest::prelude::*;

    fn fixtures() -> BTreeMap<String, HVector> {
        let mut m = BTreeMap::new();
        for (name, vals) in [
            ("woman", vec![0.5f32, -1.25, 2.0, 0.0]),
            ("man", vec![0.25, 1.0, -1.5, 3.0]),
            ("king", vec![1.0, 0.0, 0.125, -2.0]),
        ] {
            m.insert(name.to_string(), HVector::from_values(vals).unwrap());
        }
        m
    }

    #[test]
    fn term_parsing() {
        assert_eq!(
            "-man".parse::<DirectionTerm>().unwrap(),
            DirectionTerm::new("man", -1.0)
        );
        assert_eq!(
            "+woman*0.5".parse::<DirectionTerm>().unwrap(),
            DirectionTerm::new("woman", 0.5)
        );
        assert_eq!(
            "cluster:2".parse::<DirectionTerm>().unwrap(),
            DirectionTerm::new("cluster:2", 1.0)
        );
        assert!("-".parse::<DirectionTerm>().is_err());
        assert!("a*x".parse::<DirectionTerm>().is_err());
    }

    #[test]
    fn cancellation_is_zero() {
        let f = fixtures();
        let d = compose_direction(&[DirectionTerm::new("king", 1.0), DirectionTerm::new("king", -1.0)], &f).unwrap();
        assert!(d.resolved.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn difference_matches_loop() {
        let f = fixtures();
        let d = compose_direction(&[DirectionTerm::new("woman", 1.0), DirectionTerm::new("man", -1.0)], &f).unwrap();
        let (w, m) = (&f["woman"].values, &f["man"].values);
        for k in 0..w.len() {
            let want = f64::from(w[k]) - f64::from(m[k]);
            assert!((d.resolved[k] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn errors() {
        let mut f = fixtures();
        assert!(matches!(compose_direction(&[], &f), Err(Error::EmptyInput)));
        assert!(matches!(
            compose_direction(&[DirectionTerm::new("queen", 1.0)], &f),
            Err(Error::UnknownId(_))
        ));
        f.insert("short".into(), HVector::from_values(vec![1.0, 2.0]).unwrap());
        assert!(matches!(
            compose_direction(&[DirectionTerm::new("man", 1.0), DirectionTerm::new("short", 1.0)], &f),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            compose_direction(&[DirectionTerm::new("man", f64::NAN)], &f),
            Err(Error::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn composition_is_linear(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let f = fixtures();
            let two = compose_direction(&[DirectionTerm::new("king", a), DirectionTerm::new("king", b)], &f).unwrap();
            let one = compose_direction(&[DirectionTerm::new("king", a + b)], &f).unwrap();
            for (x, y) in two.resolved.iter().zip(&one.resolved) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    fn store_with(dir: &std::path::Path, rows: &[(&str, Vec<f32>)]) -> (VectorStore, Vec<String>) {
        let mut s = VectorStore::open_writable(dir).unwrap();
        let mut ids = Vec::new();
        for (i, (key, vals)) in rows.iter().enumerate() {
            let seed = i.to_string();
            let r = VectorRecord::new(
                HVector::from_values(vals.clone()).unwrap(),
                tags([(keys::KEY, *key), (keys::SEED, seed.as_str())]),
            );
            ids.push(s.put(&r).unwrap());
        }
        (s, ids)
    }

    fn atlas_over(ids: &[String], labels: Vec<i32>) -> ConceptAtlas {
        ConceptAtlas {
            record_ids: ids.to_vec(),
            points: vec![[0.0, 0.0]; ids.len()],
            labels,
            clustered_on: ClusterSpace::Vectors,
            categories: None,
            overlap: None,
            inter_cluster: vec![],
            summaries: BTreeMap::new(),
            summary_errors: BTreeMap::new(),
            config: AtlasConfig::default(),
        }
    }

    #[test]
    fn cluster_means_add() {
        let dir = tempfile::tempdir().unwrap();
        let rows = [
            ("a", vec![1.0f32, 0.0, 2.0]),
            ("b", vec![3.0, 1.0, 0.0]),
            ("c", vec![-1.0, 4.0, 0.5]),
            ("d", vec![0.0, -2.0, 1.5]),
            ("e", vec![2.0, 2.0, 2.0]),
        ];
        let (store, ids) = store_with(dir.path(), &rows);
        let labels = vec![0, 0, 1, 1, -1];
        let atlas = atlas_over(&ids, labels.clone());
        let r = StoreResolver {
            store: &store,
            atlas: Some(&atlas),
        };
        let d = compose_direction(
            &[
                DirectionTerm::new("cluster:0", 1.0),
                DirectionTerm::new("cluster:1", 1.0),
            ],
            &r,
        )
        .unwrap();
        for k in 0..3 {
            let mut want = 0.0;
            for c in 0..2 {
                let members: Vec<usize> = (0..rows.len()).filter(|&i| labels[i] == c).collect();
                let mut s = 0.0;
                for &i in &members {
                    s += f64::from(rows[i].1[k]);
                }
                want += s / members.len() as f64;
            }
            assert!((d.resolved[k] - want).abs() <= 1e-12);
        }
        assert!(matches!(r.resolve("cluster:-1"), Err(Error::UnknownId(_))));
        assert!(matches!(r.resolve("cluster:9"), Err(Error::UnknownId(_))));
        assert_eq!(r.resolve(&ids[4]).unwrap().values, vec![2.0, 2.0, 2.0]);
        assert_eq!(r.resolve("c").unwrap().values, vec![-1.0, 4.0, 0.5]);
        assert!(matches!(r.resolve("zzz"), Err(Error::UnknownId(_))));
    }

    fn direction(handle: &ModelBackendHandle) -> DirectionExpr {
        let mut f = BTreeMap::new();
        for p in ["a portrait of a woman", "a portrait of a man"] {
            let v = crate::extraction::extract_hvector(
                &PromptSpec::new(p, 0).unwrap(),
                &ExtractionConfig::default(),
                handle,
            )
            .unwrap();
            f.insert(p.to_string(), v);
        }
        compose_direction(
            &[
                DirectionTerm::new("a portrait of a woman", 1.0),
                DirectionTerm::new("a portrait of a man", -1.0),
            ],
            &f,
        )
        .unwrap()
    }

    #[test]
    fn zero_scale_is_bitwise_baseline() {
        let h = declare_backend("mock-64d", BackendMode::Lcm).unwrap();
        let d = direction(&h);
        let prompt = PromptSpec::new("a portrait of a king", 3).unwrap();
        let base = generate_baseline(&prompt, None, &h).unwrap();
        let run = ConditioningRun::new(prompt.clone(), d.clone(), 0.0, ConditioningMode::Lcm);
        assert_eq!(conditioned_generate(&run, &h).unwrap().png, base);
        let run = ConditioningRun::new(prompt, d, 2.0, ConditioningMode::Lcm);
        assert_ne!(conditioned_generate(&run, &h).unwrap().png, base);
    }

    #[test]
    fn one_injection_per_step_with_scaled_offset() {
        let h = declare_backend("mock-64d", BackendMode::Lcm).unwrap();
        let d = direction(&h);
        let scale = 0.75;
        let run = ConditioningRun::new(
            PromptSpec::new("a portrait of a king", 1).unwrap(),
            d.clone(),
            scale,
            ConditioningMode::Lcm,
        );
        let out = conditioned_generate(&run, &h).unwrap();
        assert_eq!(out.injections.len(), out.steps_executed);
        assert_eq!(out.injections.len(), out.forward_passes);
        for (i, ev) in out.injections.iter().enumerate() {
            assert_eq!(ev.step, i);
            for (o, r) in ev.offset.iter().zip(&d.resolved) {
                assert_eq!(f64::from(*o), f64::from((scale * r) as f32));
            }
        }
    }

    #[test]
    fn step_subset_and_output_file() {
        let dir = tempfile::tempdir().unwrap();
        let h = declare_backend("mock-64d", BackendMode::Lcm).unwrap();
        let mut run = ConditioningRun::new(
            PromptSpec::new("a king", 1).unwrap(),
            direction(&h),
            1.0,
            ConditioningMode::Lcm,
        );
        run.inject_steps = Some(vec![0, 2]);
        run.output_image_path = Some(dir.path().join("out/img.png"));
        let out = conditioned_generate(&run, &h).unwrap();
        assert_eq!(out.injections.iter().map(|e| e.step).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(std::fs::read(dir.path().join("out/img.png")).unwrap(), out.png);
        run.inject_steps = Some(vec![4]);
        assert!(matches!(
            conditioned_generate(&run, &h),
            Err(Error::BadIndex { index: 4, len: 4 })
        ));
    }

    #[test]
    fn ldm_transfer_runs_every_step() {
        let lcm = declare_backend("mock-64d", BackendMode::Lcm).unwrap();
        let ldm = declare_backend("mock-64d", BackendMode::Ldm).unwrap();
        let d = direction(&lcm);
        let prompt = PromptSpec::new("a portrait of a king", 2).unwrap();
        let run = ConditioningRun::new(prompt.clone(), d.clone(), 1.0, ConditioningMode::LdmTransfer);
        let out = conditioned_generate(&run, &ldm).unwrap();
        assert_eq!(out.injections.len(), BackendMode::Ldm.default_steps());
        assert!(matches!(conditioned_generate(&run, &lcm), Err(Error::ModeMismatch(_))));
        let run = ConditioningRun::new(prompt.clone(), d.clone(), 1.0, ConditioningMode::Lcm);
        assert!(matches!(conditioned_generate(&run, &ldm), Err(Error::ModeMismatch(_))));
        let mut ldm_dir = d;
        ldm_dir.source_modes[0] = TimestepMode::LdmStep { t: 999 };
        let run = ConditioningRun::new(prompt, ldm_dir, 1.0, ConditioningMode::LdmTransfer);
        assert!(matches!(conditioned_generate(&run, &ldm), Err(Error::ModeMismatch(_))));
    }

    struct NoInject(crate::extraction::BackendInfo);

    impl crate::extraction::DiffusionBackend for NoInject {
        fn info(&self) -> &crate::extraction::BackendInfo {
            &self.0
        }

        fn run(&self, _: &SamplingJob) -> Result<crate::extraction::SamplingOutput> {
            unreachable!("injection check runs first")
        }
    }

    #[test]
    fn injection_unsupported() {
        let h = declare_backend("mock-64d", BackendMode::Lcm).unwrap();
        let d = direction(&h);
        let mut info = h.info().clone();
        info.supports_injection = false;
        let bare = ModelBackendHandle::from_backend(NoInject(info));
        let run = ConditioningRun::new(PromptSpec::new("a king", 0).unwrap(), d, 1.0, ConditioningMode::Lcm);
        assert!(matches!(
            conditioned_generate(&run, &bare),
            Err(Error::InjectionUnsupported(_))
        ));
    }

    #[test]
    fn rejects_bad_runs() {
        let h = declare_backend("mock-64d", BackendMode::Lcm).unwrap();
        let d = direction(&h);
        let prompt = PromptSpec::new("a king", 0).unwrap();
        let run = ConditioningRun::new(prompt.clone(), d, f64::INFINITY, ConditioningMode::Lcm);
        assert!(matches!(conditioned_generate(&run, &h), Err(Error::InvalidConfig(_))));
        let f = fixtures();
        let small = compose_direction(&[DirectionTerm::new("king", 1.0)], &f).unwrap();
        let run = ConditioningRun::new(prompt, small, 1.0, ConditioningMode::Lcm);
        assert!(matches!(
            conditioned_generate(&run, &h),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
