use std::collections::BTreeMap;

use scalex_core::compare::{profession_delta_table, variant_correlation, Correlation, DeltaQuery, ProfessionDelta};
use scalex_core::corpus::GenderVariant;
use scalex_core::error::{Error, Result};
use scalex_core::report::deltas_csv;
use scalex_core::store::{keys, VectorStore};

use super::{prepare_dir, write_json, DELTAS_FILE};
use crate::config::RunConfig;

/// Per-variant correlation with `baseline` across the groups both tables share.
pub fn correlations(
    deltas: &BTreeMap<String, Vec<ProfessionDelta>>,
    baseline: &str,
) -> Result<BTreeMap<String, Correlation>> {
    let Some(base) = deltas.get(baseline) else {
        return Ok(BTreeMap::new());
    };
    let base: BTreeMap<&str, f64> = base.iter().map(|d| (d.group.as_str(), d.delta)).collect();
    let mut out = BTreeMap::new();
    for (variant, table) in deltas.iter().filter(|(v, _)| v.as_str() != baseline) {
        let (a, b): (Vec<f64>, Vec<f64>) = table
            .iter()
            .filter_map(|d| base.get(d.group.as_str()).map(|&x| (x, d.delta)))
            .unzip();
        out.insert(variant.clone(), variant_correlation(&a, &b)?);
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    if cfg.defaults.variants.is_empty() {
        return Err(Error::InvalidConfig("no prompt variants to compare".into()));
    }
    let store = VectorStore::open(&cfg.store)?;
    let mut deltas = BTreeMap::new();
    for v in &cfg.defaults.variants {
        v.parse::<GenderVariant>()?;
        let mut q = DeltaQuery::gender(v, cfg.seeds.clone());
        q.base.insert(keys::CORPUS.into(), cfg.defaults.corpus.clone());
        deltas.insert(v.clone(), profession_delta_table(&store, &q)?);
    }
    let corr = correlations(&deltas, &cfg.defaults.baseline)?;
    let dir = prepare_dir(cfg, "defaults")?;
    write_json(&dir.join(DELTAS_FILE), &deltas)?;
    let csv = dir.join("deltas.csv");
    std::fs::write(&csv, deltas_csv(&deltas)?).map_err(|e| Error::io(&csv, e))?;
    if !corr.is_empty() {
        write_json(&dir.join("variant_correlations.json"), &corr)?;
    }
    for (v, table) in &deltas {
        for d in table {
            println!("{v}\t{}\t{}", d.group, scalex_core::report::fmt4(d.delta));
        }
    }
    Ok(())
}
