use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hvector::HVector;
use crate::store::{keys, ManifestEntry, Tags, VectorStore};

use super::distance::cosine_distance;

/// `d(attr_a, neutral) - d(attr_b, neutral)`. Positive when the neutral
/// vector sits closer to `attr_b`.
pub fn default_delta(h_neutral: &HVector, h_attr_a: &HVector, h_attr_b: &HVector) -> Result<f64> {
    Ok(cosine_distance(h_attr_a, h_neutral)? - cosine_distance(h_attr_b, h_neutral)?)
}

/// Record ids and delta for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDelta {
    pub seed: u64,
    pub neutral_id: String,
    pub attr_a_id: String,
    pub attr_b_id: String,
    pub delta: f64,
}

/// Delta for one neutral prompt and attribute pair, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultDeltaResult {
    /// Ids of the first seed's records.
    pub neutral_id: String,
    pub attr_a_id: String,
    pub attr_b_id: String,
    /// Value of the match tag shared by the three prompts.
    pub scenario: String,
    pub neutral_prompt: String,
    pub delta: f64,
    pub per_seed_deltas: Vec<f64>,
    pub per_seed: Vec<SeedDelta>,
}

/// All prompts of one group (e.g. a profession).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfessionDelta {
    pub group: String,
    /// Mean over the group's prompt deltas.
    pub delta: f64,
    pub prompts: Vec<DefaultDeltaResult>,
}

/// Which records form each (neutral, attr_a, attr_b) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaQuery {
    /// Tags every participating record carries.
    pub base: Tags,
    /// Tag whose values define the output rows.
    pub group_key: String,
    /// Tag linking a neutral prompt to its attributed versions.
    pub match_key: String,
    pub neutral: Tags,
    pub attr_a: Tags,
    pub attr_b: Tags,
    pub seeds: Vec<u64>,
}

impl DeltaQuery {
    /// Female-minus-male deltas over the professions corpus for one prompt variant.
    pub fn gender(variant: &str, seeds: Vec<u64>) -> Self {
        let t = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<Tags>()
        };
        Self {
            base: t(&[(keys::CORPUS, "professions")]),
            group_key: keys::PROFESSION.into(),
            match_key: keys::SCENARIO.into(),
            neutral: t(&[(keys::GENDER, "neutral")]),
            attr_a: t(&[(keys::GENDER, "female"), (keys::VARIANT, variant)]),
            attr_b: t(&[(keys::GENDER, "male"), (keys::VARIANT, variant)]),
            seeds,
        }
    }

    fn filter(&self, role: &Tags, group: &str, scenario: &str, seed: u64) -> Tags {
        let mut f = self.base.clone();
        f.extend(role.iter().map(|(k, v)| (k.clone(), v.clone())));
        f.insert(self.group_key.clone(), group.into());
        f.insert(self.match_key.clone(), scenario.into());
        f.insert(keys::SEED.into(), seed.to_string());
        f
    }
}

fn unique<'a>(store: &'a VectorStore, filter: &Tags, what: &str) -> Result<&'a ManifestEntry> {
    let mut it = store.query_entries(filter);
    let first = it
        .next()
        .ok_or_else(|| Error::MissingVariant(format!("{what}: no record matches {}", describe(filter))))?;
    if it.next().is_some() {
        return Err(Error::InvalidConfig(format!(
            "{what}: several records match {}",
            describe(filter)
        )));
    }
    Ok(first)
}

fn describe(t: &Tags) -> String {
    t.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

/// Per-group default deltas, sorted ascending by delta (ties by group name).
pub fn profession_delta_table(store: &VectorStore, query: &DeltaQuery) -> Result<Vec<ProfessionDelta>> {
    if query.seeds.is_empty() {
        return Err(Error::InvalidConfig("no seeds requested".into()));
    }
    let mut neutral_filter = query.base.clone();
    neutral_filter.extend(query.neutral.clone());
    let mut groups: BTreeSet<(String, String)> = BTreeSet::new();
    for e in store.query_entries(&neutral_filter) {
        if let (Some(g), Some(s)) = (e.tags.get(&query.group_key), e.tags.get(&query.match_key)) {
            groups.insert((g.clone(), s.clone()));
        }
    }
    if groups.is_empty() {
        return Err(Error::MissingVariant(format!(
            "no neutral records match {}",
            describe(&neutral_filter)
        )));
    }

    let mut out: Vec<ProfessionDelta> = Vec::new();
    for (group, scenario) in groups {
        let mut per_seed = Vec::with_capacity(query.seeds.len());
        let mut neutral_prompt = String::new();
        for &seed in &query.seeds {
            let label = format!("{group} / {scenario} / seed {seed}");
            let n = unique(store, &query.filter(&query.neutral, &group, &scenario, seed), &label)?;
            let a = unique(store, &query.filter(&query.attr_a, &group, &scenario, seed), &label)?;
            let b = unique(store, &query.filter(&query.attr_b, &group, &scenario, seed), &label)?;
            let (hn, ha, hb) = (store.get(&n.id)?, store.get(&a.id)?, store.get(&b.id)?);
            if neutral_prompt.is_empty() {
                neutral_prompt = hn.hvector.prompt.text.clone();
            }
            per_seed.push(SeedDelta {
                seed,
                neutral_id: n.id.clone(),
                attr_a_id: a.id.clone(),
                attr_b_id: b.id.clone(),
                delta: default_delta(&hn.hvector, &ha.hvector, &hb.hvector)?,
            });
        }
        let per_seed_deltas: Vec<f64> = per_seed.iter().map(|s| s.delta).collect();
        let result = DefaultDeltaResult {
            neutral_id: per_seed[0].neutral_id.clone(),
            attr_a_id: per_seed[0].attr_a_id.clone(),
            attr_b_id: per_seed[0].attr_b_id.clone(),
            scenario,
            neutral_prompt,
            delta: per_seed_deltas.iter().sum::<f64>() / per_seed_deltas.len() as f64,
            per_seed_deltas,
            per_seed,
        };
        match out.last_mut() {
            Some(p) if p.group == group => p.prompts.push(result),
            _ => out.push(ProfessionDelta {
                group,
                delta: 0.0,
                prompts: vec![result],
            }),
        }
    }
    for p in &mut out {
        p.delta = p.prompts.iter().map(|r| r.delta).sum::<f64>() / p.prompts.len() as f64;
    }
    out.sort_by(|a, b| a.delta.total_cmp(&b.delta).then_with(|| a.group.cmp(&b.group)));
    Ok(out)
}
