use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scalex_core::atlas::AtlasConfig;
use scalex_core::conditioning::ConditioningMode;
use scalex_core::corpus::{DESCRIPTOR_TEMPLATE, GENDER_CONCEPTS};
use scalex_core::error::{Error, Result};
use scalex_core::extraction::BackendMode;

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// Neutral profession prompts plus gendered rewrites.
    Professions,
    /// Descriptor lines wrapped in a portrait template.
    Descriptors,
    /// Target concepts listed inline.
    Concepts,
    /// Corpus lines used verbatim.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSet {
    pub kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<String>,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default = "default_surnames")]
    pub surnames: String,
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default)]
    pub concepts: Vec<String>,
    /// Use only the first N corpus lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

fn default_variants() -> Vec<String> {
    vec!["female_male".into()]
}

fn default_surnames() -> String {
    "builtin:surnames".into()
}

fn default_template() -> String {
    DESCRIPTOR_TEMPLATE.into()
}

fn gender_concepts() -> Vec<String> {
    GENDER_CONCEPTS.iter().map(|s| s.to_string()).collect()
}

impl PromptSet {
    fn new(kind: SetKind, corpus: Option<&str>) -> Self {
        Self {
            kind,
            corpus: corpus.map(str::to_string),
            variants: default_variants(),
            surnames: default_surnames(),
            template: default_template(),
            concepts: Vec::new(),
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub sets: Vec<PromptSet>,
    pub batch_size: usize,
    pub num_refinement_steps_discarded: usize,
}

impl Default for ExtractSection {
    fn default() -> Self {
        let mut concepts = PromptSet::new(SetKind::Concepts, None);
        concepts.concepts = gender_concepts();
        Self {
            sets: vec![
                PromptSet::new(SetKind::Professions, Some("builtin:professions")),
                PromptSet::new(SetKind::Descriptors, Some("builtin:hair")),
                concepts,
            ],
            batch_size: 8,
            num_refinement_steps_discarded: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefaultsSection {
    /// Value of the `corpus` tag holding the profession records.
    pub corpus: String,
    pub variants: Vec<String>,
    /// Variant the others are correlated against.
    pub baseline: String,
}

impl Default for DefaultsSection {
    fn default() -> Self {
        Self {
            corpus: "professions".into(),
            variants: default_variants(),
            baseline: "female_male".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    /// Value of the `corpus` tag holding the descriptor records.
    pub corpus: String,
    /// Concept prompts (`key` tags of the concept records).
    pub concepts: Vec<String>,
    /// Concept to rank towards; the first concept when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Any of raw, mean_centered, std_scaled, pca.
    pub normalizations: Vec<String>,
    pub std_axis: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_rank: Option<usize>,
    /// none, global or per_seed; per_seed with several seeds, global otherwise, when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca_centering: Option<String>,
    /// none, env, echo, or replay:<path>.
    pub summarizer: String,
    /// Saves every summarizer exchange here for later replay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_summaries: Option<PathBuf>,
}

impl Default for RankSection {
    fn default() -> Self {
        Self {
            corpus: "hair".into(),
            concepts: gender_concepts(),
            target: None,
            normalizations: vec!["mean_centered".into()],
            std_axis: "per_concept".into(),
            pca_rank: None,
            pca_centering: None,
            summarizer: "none".into(),
            record_summaries: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasSection {
    /// Values of the `corpus` tag to include; every record when empty.
    pub corpora: Vec<String>,
    /// Tag whose value labels each point's category.
    pub category_tag: String,
    pub summarizer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_summaries: Option<PathBuf>,
    pub params: AtlasConfig,
}

impl Default for AtlasSection {
    fn default() -> Self {
        Self {
            corpora: Vec::new(),
            category_tag: "corpus".into(),
            summarizer: "none".into(),
            record_summaries: None,
            params: AtlasConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionSection {
    pub prompt: String,
    pub seed: u64,
    /// `+source`, `-source` or `source*weight`; sources are record ids, keys or `cluster:N`.
    pub terms: Vec<String>,
    pub scale: f64,
    pub mode: ConditioningMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_steps: Option<Vec<usize>>,
    /// Atlas used to resolve `cluster:N`; the atlas command's output when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atlas: Option<PathBuf>,
    /// Also render the unconditioned image.
    pub baseline: bool,
}

impl Default for ConditionSection {
    fn default() -> Self {
        Self {
            prompt: "a portrait of a king".into(),
            seed: 0,
            terms: GENDER_CONCEPTS
                .iter()
                .zip(["+", "-"])
                .map(|(c, s)| format!("{s}{c}"))
                .collect(),
            scale: 1.0,
            mode: ConditioningMode::Lcm,
            steps: None,
            inject_steps: None,
            atlas: None,
            baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// One sub-directory per prompt id holding that prompt's images.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    /// Render the images first from the neutral profession prompts.
    pub generate: bool,
    pub protocol: String,
    /// Overrides the protocol's class prompts.
    pub class_prompts: Vec<String>,
    pub target_class: String,
    /// Delta table (CSV or JSON); the defaults command's output when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<PathBuf>,
    pub variant: String,
    /// env or replay:<path>.
    pub classifier: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_classifications: Option<PathBuf>,
    pub concurrency: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            images: None,
            generate: false,
            protocol: "gender".into(),
            class_prompts: Vec::new(),
            target_class: "woman".into(),
            deltas: None,
            variant: "female_male".into(),
            classifier: "env".into(),
            record_classifications: None,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Analyses to include (defaults, rank, atlas, validate); all present when empty.
    pub analyses: Vec<String>,
}

/// Everything a command needs. Saved beside each command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub mode: BackendMode,
    pub store: PathBuf,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capture_layer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guidance_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_prompt: Option<String>,
    pub extract: ExtractSection,
    pub defaults: DefaultsSection,
    pub rank: RankSection,
    pub atlas: AtlasSection,
    pub condition: ConditionSection,
    pub validate: ValidateSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "sd15".into(),
            mode: BackendMode::Lcm,
            store: "store".into(),
            out: "out".into(),
            seeds: (0..6).collect(),
            capture_layer: None,
            guidance_scale: None,
            negative_prompt: None,
            extract: ExtractSection::default(),
            defaults: DefaultsSection::default(),
            rank: RankSection::default(),
            atlas: AtlasSection::default(),
            condition: ConditionSection::default(),
            validate: ValidateSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        // Relative paths in a config file are relative to that file.
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store);
        fix(&mut self.out);
        for p in [
            self.condition.atlas.as_mut(),
            self.validate.images.as_mut(),
            self.validate.deltas.as_mut(),
            self.validate.record_classifications.as_mut(),
            self.rank.record_summaries.as_mut(),
            self.atlas.record_summaries.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for set in &mut self.extract.sets {
            if let Some(c) = set.corpus.as_mut().filter(|c| !c.starts_with("builtin:")) {
                if Path::new(c.as_str()).is_relative() {
                    *c = base.join(&*c).to_string_lossy().into_owned();
                }
            }
            if !set.surnames.starts_with("builtin:") && Path::new(&set.surnames).is_relative() {
                set.surnames = base.join(&set.surnames).to_string_lossy().into_owned();
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        Ok(())
    }

    pub fn command_dir(&self, command: &str) -> PathBuf {
        self.out.join(command)
    }

    pub fn write_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = toml::to_string_pretty(self).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
        let path = dir.join(RUN_CONFIG_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
