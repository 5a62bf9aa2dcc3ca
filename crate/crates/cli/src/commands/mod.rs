pub mod atlas;
pub mod condition;
pub mod defaults;
pub mod extract;
pub mod rank;
pub mod report;
pub mod validate;

use std::path::{Path, PathBuf};

use serde::Serialize;

use scalex_core::error::{Error, Result};
use scalex_core::extraction::{declare_backend, BackendMode, ModelBackendHandle};
use scalex_core::hvector::PromptSpec;
use scalex_core::llm::{EchoSummarizer, HttpSummarizer, RecordingSummarizer, ReplaySummarizer, SummarizerClient};

use crate::config::RunConfig;

pub const DELTAS_FILE: &str = "deltas.json";
pub const RANKINGS_FILE: &str = "rankings.json";
pub const ATLAS_FILE: &str = "atlas.json";
pub const VALIDATION_FILE: &str = "validation.json";

pub fn backend(cfg: &RunConfig, mode: BackendMode) -> Result<ModelBackendHandle> {
    declare_backend(&cfg.model, mode)
}

pub fn prompt_spec(cfg: &RunConfig, text: &str, seed: u64) -> Result<PromptSpec> {
    let mut p = PromptSpec::new(text, seed)?;
    if let Some(g) = cfg.guidance_scale {
        p = p.with_guidance(g)?;
    }
    if let Some(n) = &cfg.negative_prompt {
        p = p.with_negative(n.clone());
    }
    Ok(p)
}

pub fn json_text<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, json_text(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Output directory of `command`, created, with the resolved config saved in it.
pub fn prepare_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = cfg.command_dir(command);
    cfg.write_into(&dir)?;
    Ok(dir)
}

pub enum Summarizer {
    Plain(Box<dyn SummarizerClient>),
    Recording(RecordingSummarizer<Box<dyn SummarizerClient>>),
}

impl Summarizer {
    pub fn client(&self) -> &dyn SummarizerClient {
        match self {
            Summarizer::Plain(c) => c.as_ref(),
            Summarizer::Recording(r) => r,
        }
    }

    /// Saves the recorded exchanges, if recording.
    pub fn finish(&self, path: Option<&Path>) -> Result<()> {
        match (self, path) {
            (Summarizer::Recording(r), Some(p)) => r.save(p),
            _ => Ok(()),
        }
    }
}

/// A summarizer chosen by name: `none`, `env`, `echo` or `replay:<path>`.
pub fn summarizer(spec: &str, record: Option<&Path>) -> Result<Option<Summarizer>> {
    let inner: Box<dyn SummarizerClient> = match spec {
        "none" | "" => return Ok(None),
        "env" => Box::new(HttpSummarizer::from_env()?),
        "echo" => Box::new(EchoSummarizer),
        s => match s.strip_prefix("replay:") {
            Some(p) => Box::new(ReplaySummarizer::load(p)?),
            None => return Err(Error::InvalidConfig(format!("unknown summarizer `{s}`"))),
        },
    };
    Ok(Some(match record {
        Some(_) => Summarizer::Recording(RecordingSummarizer::new(inner)),
        None => Summarizer::Plain(inner),
    }))
}
