use std::collections::BTreeMap;

use scalex_core::compare::{
    distance_matrix, llm_summarize_ranking, normalize_mean, normalize_pca, normalize_std, rank_descriptors, Centering,
    DistanceMatrix, PcaOptions, RankingResult, RankingSummary, StdAxis,
};
use scalex_core::error::{Error, Result};
use scalex_core::hvector::HVector;
use scalex_core::store::{keys, tags, VectorRecord, VectorStore};

use super::{prepare_dir, summarizer, write_json, RANKINGS_FILE};
use crate::config::RunConfig;

/// Records of one side of the comparison, pooled over seeds.
struct Pool {
    keys: Vec<String>,
    seeds: Vec<u64>,
    vectors: Vec<HVector>,
    captions: BTreeMap<String, String>,
}

fn pool(mut records: Vec<VectorRecord>, seeds: &[u64], what: &str) -> Result<Pool> {
    records.retain(|r| {
        r.tag(keys::SEED)
            .and_then(|s| s.parse::<u64>().ok())
            .is_some_and(|s| seeds.contains(&s))
    });
    if records.is_empty() {
        return Err(Error::MissingVariant(format!(
            "no stored {what} records for the configured seeds"
        )));
    }
    let key = |r: &VectorRecord| r.tag(keys::KEY).unwrap_or(r.id()).to_string();
    let seed = |r: &VectorRecord| r.tag(keys::SEED).and_then(|s| s.parse::<u64>().ok()).unwrap_or(0);
    records.sort_by(|a, b| key(a).cmp(&key(b)).then(seed(a).cmp(&seed(b))).then(a.id().cmp(b.id())));
    let mut p = Pool {
        keys: Vec::new(),
        seeds: Vec::new(),
        vectors: Vec::new(),
        captions: BTreeMap::new(),
    };
    for r in records {
        let k = key(&r);
        p.captions
            .entry(k.clone())
            .or_insert_with(|| r.hvector.prompt.text.clone());
        p.keys.push(k);
        p.seeds.push(seed(&r));
        p.vectors.push(r.hvector);
    }
    Ok(p)
}

fn concept_pool(store: &VectorStore, concepts: &[String], seeds: &[u64]) -> Result<Pool> {
    let mut records = Vec::new();
    for c in concepts {
        let found = store.query(&tags([(keys::KEY, c.as_str())]))?;
        if found.is_empty() {
            return Err(Error::MissingVariant(format!("no stored vectors for concept `{c}`")));
        }
        records.extend(found);
    }
    let p = pool(records, seeds, "concept")?;
    // Keep the configured concept order rather than sorted order.
    let order = |k: &String| concepts.iter().position(|c| c == k).unwrap_or(usize::MAX);
    let mut idx: Vec<usize> = (0..p.keys.len()).collect();
    idx.sort_by_key(|&i| (order(&p.keys[i]), p.seeds[i]));
    Ok(Pool {
        keys: idx.iter().map(|&i| p.keys[i].clone()).collect(),
        seeds: idx.iter().map(|&i| p.seeds[i]).collect(),
        vectors: idx.iter().map(|&i| p.vectors[i].clone()).collect(),
        captions: p.captions,
    })
}

fn centering(cfg: &RunConfig, d: &Pool, c: &Pool) -> Result<Centering> {
    let per_seed = || Centering::PerSeed {
        concept_seeds: c.seeds.clone(),
        descriptor_seeds: d.seeds.clone(),
    };
    match cfg.rank.pca_centering.as_deref() {
        None => Ok(if cfg.seeds.len() > 1 {
            per_seed()
        } else {
            Centering::Global
        }),
        Some("none") => Ok(Centering::None),
        Some("global") => Ok(Centering::Global),
        Some("per_seed") => Ok(per_seed()),
        Some(o) => Err(Error::InvalidConfig(format!("unknown pca centering `{o}`"))),
    }
}

/// Seed-collapsed matrix for one normalization name.
fn normalized(cfg: &RunConfig, name: &str, d: &Pool, c: &Pool) -> Result<DistanceMatrix> {
    let collapse = |m: DistanceMatrix| m.collapse_seeds(&d.keys, &d.seeds, &c.keys, &c.seeds);
    match name {
        "pca" | "pca_projected" => {
            let opts = PcaOptions {
                rank: cfg.rank.pca_rank,
                centering: centering(cfg, d, c)?,
            };
            collapse(normalize_pca(&d.vectors, &c.vectors, &opts)?)
        }
        _ => {
            let raw = collapse(distance_matrix(&d.vectors, &c.vectors)?)?;
            match name {
                "raw" => Ok(raw),
                "mean_centered" | "mean" => normalize_mean(&raw),
                "std_scaled" | "std" => normalize_std(&raw, cfg.rank.std_axis.parse::<StdAxis>()?),
                o => Err(Error::InvalidConfig(format!("unknown normalization `{o}`"))),
            }
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    if cfg.rank.concepts.len() < 2 {
        return Err(Error::InvalidConfig("ranking needs at least two concepts".into()));
    }
    if cfg.rank.normalizations.is_empty() {
        return Err(Error::InvalidConfig("no normalizations requested".into()));
    }
    let target = match &cfg.rank.target {
        None => 0,
        Some(t) => cfg
            .rank
            .concepts
            .iter()
            .position(|c| c == t)
            .ok_or_else(|| Error::InvalidConfig(format!("target `{t}` is not one of the concepts")))?,
    };
    let client = summarizer(&cfg.rank.summarizer, cfg.rank.record_summaries.as_deref())?;
    let store = VectorStore::open(&cfg.store)?;
    let descs = pool(
        store.query(&tags([(keys::CORPUS, cfg.rank.corpus.as_str())]))?,
        &cfg.seeds,
        "descriptor",
    )?;
    let concepts = concept_pool(&store, &cfg.rank.concepts, &cfg.seeds)?;

    let mut rankings: Vec<RankingResult> = Vec::new();
    for name in &cfg.rank.normalizations {
        let m = normalized(cfg, name, &descs, &concepts)?;
        rankings.push(rank_descriptors(&m, target)?);
    }
    let mut summaries: Vec<RankingSummary> = Vec::new();
    if let Some(s) = &client {
        let caption = |id: &str| descs.captions.get(id).cloned().unwrap_or_else(|| id.to_string());
        for r in &rankings {
            summaries.push(llm_summarize_ranking(r, &caption, s.client())?);
        }
    }

    let dir = prepare_dir(cfg, "rank")?;
    write_json(&dir.join(RANKINGS_FILE), &rankings)?;
    if let Some(s) = &client {
        write_json(&dir.join("summaries.json"), &summaries)?;
        s.finish(cfg.rank.record_summaries.as_deref())?;
    }
    for r in &rankings {
        println!(
            "{} -> {} ({} descriptors)",
            r.normalization,
            r.target_concept_id,
            r.len()
        );
        for d in r.ranked.iter().take(5) {
            println!(
                "  {}\t{}",
                scalex_core::report::fmt4(d.score),
                descs.captions[&d.descriptor_id]
            );
        }
    }
    if !summaries.is_empty() {
        println!(
            "{} summary(ies) in {}",
            summaries.len(),
            dir.join("summaries.json").display()
        );
    }
    Ok(())
}
