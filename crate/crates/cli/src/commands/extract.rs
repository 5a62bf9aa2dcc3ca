use std::collections::BTreeMap;

use serde::Serialize;

use scalex_core::corpus::{
    concept_jobs, descriptor_jobs, load_corpus, plain_jobs, profession_jobs, Corpus, GenderVariant, PromptJob,
};
use scalex_core::error::{Error, Result};
use scalex_core::extraction::{extract_batch, ExtractionConfig};
use scalex_core::store::{keys, VectorRecord, VectorStore};

use super::{prepare_dir, prompt_spec, write_json};
use crate::config::{PromptSet, RunConfig, SetKind};

#[derive(Debug, Serialize)]
struct ExtractSummary {
    prompts: usize,
    jobs: usize,
    extracted: usize,
    skipped_existing: usize,
    records_added: usize,
    records_total: usize,
    /// Blank corpus lines skipped, per corpus.
    skipped_blank: BTreeMap<String, usize>,
}

fn load_limited(source: &str, limit: Option<usize>) -> Result<Corpus> {
    let mut c = load_corpus(source)?;
    if let Some(n) = limit {
        c.prompts.truncate(n);
    }
    Ok(c)
}

fn set_jobs(set: &PromptSet, blanks: &mut BTreeMap<String, usize>) -> Result<Vec<PromptJob>> {
    let mut corpus = || -> Result<Corpus> {
        let src = set
            .corpus
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("{:?} prompt set needs a corpus", set.kind)))?;
        let c = load_limited(src, set.limit)?;
        if c.skipped_blank > 0 {
            log::warn!("corpus `{}`: skipped {} blank line(s)", c.name, c.skipped_blank);
        }
        *blanks.entry(c.name.clone()).or_default() += c.skipped_blank;
        Ok(c)
    };
    match set.kind {
        SetKind::Professions => {
            let variants = set
                .variants
                .iter()
                .map(|v| v.parse::<GenderVariant>())
                .collect::<Result<Vec<_>>>()?;
            let surnames = if variants.contains(&GenderVariant::Honorific) {
                load_corpus(&set.surnames)?.prompts
            } else {
                Vec::new()
            };
            profession_jobs(&corpus()?, &variants, &surnames)
        }
        SetKind::Descriptors => descriptor_jobs(&corpus()?, &set.template),
        SetKind::Plain => Ok(plain_jobs(&corpus()?)),
        SetKind::Concepts => {
            if set.concepts.is_empty() {
                return Err(Error::InvalidConfig("concepts prompt set lists no concepts".into()));
            }
            Ok(concept_jobs(&set.concepts))
        }
    }
}

fn already_stored(store: &VectorStore, job: &PromptJob, seed: u64, model: &str) -> bool {
    let mut filter = job.tags.clone();
    filter.insert(keys::SEED.into(), seed.to_string());
    store
        .query_entries(&filter)
        .any(|e| e.meta.prompt.text == job.text && e.meta.model_id == model)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let mut blanks = BTreeMap::new();
    let mut jobs = Vec::new();
    for set in &cfg.extract.sets {
        jobs.extend(set_jobs(set, &mut blanks)?);
    }
    if jobs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let handle = super::backend(cfg, cfg.mode)?;
    let mut store = VectorStore::open_writable(&cfg.store)?;
    let before = store.len();
    let mut summary = ExtractSummary {
        prompts: jobs.len(),
        jobs: jobs.len() * cfg.seeds.len(),
        extracted: 0,
        skipped_existing: 0,
        records_added: 0,
        records_total: 0,
        skipped_blank: blanks,
    };
    for &seed in &cfg.seeds {
        let pending: Vec<&PromptJob> = jobs
            .iter()
            .filter(|j| !already_stored(&store, j, seed, handle.model_id()))
            .collect();
        summary.skipped_existing += jobs.len() - pending.len();
        if pending.is_empty() {
            continue;
        }
        let prompts = pending
            .iter()
            .map(|j| prompt_spec(cfg, &j.text, seed))
            .collect::<Result<Vec<_>>>()?;
        let ecfg = ExtractionConfig {
            seeds: vec![seed],
            batch_size: cfg.extract.batch_size,
            capture_layer: cfg.capture_layer.clone(),
            num_refinement_steps_discarded: cfg.extract.num_refinement_steps_discarded,
        };
        let vectors = extract_batch(&prompts, &ecfg, &handle)?;
        for (job, v) in pending.iter().zip(vectors) {
            let mut tags = job.tags.clone();
            tags.insert(keys::SEED.into(), seed.to_string());
            store.put(&VectorRecord::new(v, tags))?;
            summary.extracted += 1;
        }
    }
    summary.records_total = store.len();
    summary.records_added = summary.records_total - before;
    let dir = prepare_dir(cfg, "extract")?;
    write_json(&dir.join("extract_summary.json"), &summary)?;
    println!(
        "extracted {} vector(s), {} already stored, {} new record(s), {} total",
        summary.extracted, summary.skipped_existing, summary.records_added, summary.records_total
    );
    let blank: usize = summary.skipped_blank.values().sum();
    if blank > 0 {
        println!("skipped {blank} blank corpus line(s)");
    }
    Ok(())
}
