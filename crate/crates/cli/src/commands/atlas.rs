use std::collections::BTreeMap;

use scalex_core::atlas::{build_atlas, summarize_clusters};
use scalex_core::error::{Error, Result};
use scalex_core::store::{keys, tags, VectorRecord, VectorStore};

use super::{prepare_dir, summarizer, write_json, ATLAS_FILE};
use crate::config::RunConfig;

fn records(store: &VectorStore, cfg: &RunConfig) -> Result<Vec<VectorRecord>> {
    let mut out = if cfg.atlas.corpora.is_empty() {
        store.query(&Default::default())?
    } else {
        let mut all = Vec::new();
        for c in &cfg.atlas.corpora {
            all.extend(store.query(&tags([(keys::CORPUS, c.as_str())]))?);
        }
        all
    };
    out.retain(|r| {
        r.tag(keys::SEED)
            .and_then(|s| s.parse::<u64>().ok())
            .is_none_or(|s| cfg.seeds.contains(&s))
    });
    out.sort_by(|a, b| a.id().cmp(b.id()));
    out.dedup_by(|a, b| a.id() == b.id());
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let client = summarizer(&cfg.atlas.summarizer, cfg.atlas.record_summaries.as_deref())?;
    let store = VectorStore::open(&cfg.store)?;
    let recs = records(&store, cfg)?;
    if recs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ids: Vec<String> = recs.iter().map(|r| r.id().to_string()).collect();
    let categories: Vec<String> = recs
        .iter()
        .map(|r| r.tag(&cfg.atlas.category_tag).unwrap_or("").to_string())
        .collect();
    let captions: BTreeMap<String, String> = recs
        .iter()
        .map(|r| (r.id().to_string(), r.hvector.prompt.text.clone()))
        .collect();
    let vectors: Vec<_> = recs.into_iter().map(|r| r.hvector).collect();
    let cats = categories.iter().any(|c| !c.is_empty()).then_some(categories);
    let mut atlas = build_atlas(ids, &vectors, cats, &cfg.atlas.params)?;

    let dir = prepare_dir(cfg, "atlas")?;
    if let Some(s) = &client {
        let caption = |id: &str| captions.get(id).cloned();
        let sums = summarize_clusters(&atlas, &caption, s.client())?;
        atlas.summaries = sums.summaries;
        atlas.summary_errors = sums.errors;
        s.finish(cfg.atlas.record_summaries.as_deref())?;
    }
    write_json(&dir.join(ATLAS_FILE), &atlas)?;
    println!(
        "{} point(s), {} cluster(s), {} noise",
        atlas.record_ids.len(),
        atlas.cluster_ids().len(),
        atlas.noise_count()
    );
    if let Some(o) = &atlas.overlap {
        println!("overlap: {}", serde_json::to_string(o)?);
    }
    for (c, s) in &atlas.summaries {
        let first = s.lines().next().unwrap_or("");
        println!("cluster {c}: {}", first.chars().take(100).collect::<String>());
    }
    for (c, e) in &atlas.summary_errors {
        log::warn!("cluster {c}: summary failed: {e}");
    }
    Ok(())
}
