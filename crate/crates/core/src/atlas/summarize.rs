use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{Exchange, SummarizerClient};

use super::ConceptAtlas;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummaries {
    pub summaries: BTreeMap<i32, String>,
    /// Every request/response pair, in chunk order, per cluster.
    pub exchanges: BTreeMap<i32, Vec<Exchange>>,
    pub errors: BTreeMap<i32, String>,
}

const HEADER: &str = "The captions below belong to one cluster of image representations. Describe what they have in common.\n\nCaptions:\n";

/// Prompt listing `captions`.
pub fn cluster_prompt(captions: &[String]) -> String {
    let mut p = String::from(HEADER);
    p.push_str(&captions.join("\n"));
    p
}

/// Splits `captions` into consecutive runs whose prompts fit in `limit` characters.
fn chunks(captions: &[String], limit: usize) -> Vec<Vec<String>> {
    let base = HEADER.chars().count();
    let mut out: Vec<Vec<String>> = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    let mut len = base;
    for c in captions {
        let add = c.chars().count() + usize::from(!cur.is_empty());
        if !cur.is_empty() && len + add > limit {
            out.push(std::mem::take(&mut cur));
            len = base;
        }
        len += c.chars().count() + usize::from(!cur.is_empty());
        cur.push(c.clone());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn summarize_one(captions: &[String], client: &dyn SummarizerClient) -> Result<Vec<Exchange>> {
    chunks(captions, client.max_prompt_chars())
        .iter()
        .map(|chunk| client.summarize(&cluster_prompt(chunk)))
        .collect()
}

/// One summary per non-noise cluster of `atlas`.
///
/// `caption` maps a record id to its caption. Requests run on at most
/// `atlas.config.summary_concurrency` threads. A failing cluster is recorded
/// in `errors` and does not stop the others. Oversized clusters are split
/// into several requests whose answers are joined with newlines.
pub fn summarize_clusters(
    atlas: &ConceptAtlas,
    caption: &(dyn Fn(&str) -> Option<String> + Sync),
    client: &dyn SummarizerClient,
) -> Result<ClusterSummaries> {
    let ids = atlas.cluster_ids();
    let mut jobs: Vec<(i32, Vec<String>)> = Vec::with_capacity(ids.len());
    for &c in &ids {
        let caps = atlas
            .members(c)
            .into_iter()
            .map(|id| caption(id).ok_or_else(|| Error::UnknownId(id.to_string())))
            .collect::<Result<Vec<String>>>()?;
        jobs.push((c, caps));
    }
    let results: Mutex<Vec<(i32, Result<Vec<Exchange>>)>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let workers = atlas.config.summary_concurrency.clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some((c, caps)) = jobs.get(k) else { break };
                let r = summarize_one(caps, client);
                results.lock().unwrap_or_else(|e| e.into_inner()).push((*c, r));
            });
        }
    });
    let mut out = ClusterSummaries::default();
    for (c, r) in results.into_inner().unwrap_or_else(|e| e.into_inner()) {
        match r {
            Ok(ex) => {
                out.summaries
                    .insert(c, ex.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n"));
                out.exchanges.insert(c, ex);
            }
            Err(e) => {
                out.errors.insert(c, format!("{}: {e}", e.kind()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{AtlasConfig, ClusterSpace};
    use crate::llm::{EchoSummarizer, RecordingSummarizer, ReplaySummarizer};

    fn atlas(labels: Vec<i32>) -> ConceptAtlas {
        let n = labels.len();
        ConceptAtlas {
            record_ids: (0..n).map(|i| format!("r{i}")).collect(),
            points: vec![[0.0, 0.0]; n],
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

    fn caption(id: &str) -> Option<String> {
        Some(format!("caption {id}"))
    }

    #[test]
    fn echo_summaries_contain_members() {
        let a = atlas(vec![0, 1, 0, -1, 1]);
        let s = summarize_clusters(&a, &caption, &EchoSummarizer).unwrap();
        assert_eq!(s.summaries.len(), 2);
        assert!(s.summaries[&0].contains("caption r0") && s.summaries[&0].contains("caption r2"));
        assert!(!s.summaries[&0].contains("caption r3"));
        assert!(s.summaries[&1].contains("caption r4"));
    }

    struct FailOn(&'static str);

    impl SummarizerClient for FailOn {
        fn model(&self) -> &str {
            "fail"
        }

        fn send(&self, payload: &str) -> Result<String> {
            if payload.contains(self.0) {
                Err(Error::EndpointUnavailable("down".into()))
            } else {
                EchoSummarizer.send(payload)
            }
        }
    }

    #[test]
    fn failure_is_isolated_per_cluster() {
        let a = atlas(vec![0, 1, 2]);
        let s = summarize_clusters(&a, &caption, &FailOn("caption r1")).unwrap();
        assert!(s.summaries.contains_key(&0) && s.summaries.contains_key(&2));
        assert!(s.errors[&1].starts_with("EndpointUnavailable"));
    }

    struct Small;

    impl SummarizerClient for Small {
        fn model(&self) -> &str {
            "small"
        }

        fn send(&self, payload: &str) -> Result<String> {
            EchoSummarizer.send(payload)
        }

        fn max_prompt_chars(&self) -> usize {
            HEADER.chars().count() + 25
        }
    }

    #[test]
    fn oversized_cluster_is_chunked() {
        let a = atlas(vec![0; 5]);
        let s = summarize_clusters(&a, &caption, &Small).unwrap();
        assert!(s.exchanges[&0].len() > 1);
        for id in 0..5 {
            assert!(s.summaries[&0].contains(&format!("caption r{id}")));
        }
    }

    #[test]
    fn replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.json");
        let a = atlas(vec![0, 0, 1, 1, 2]);
        let rec = RecordingSummarizer::new(EchoSummarizer);
        let live = summarize_clusters(&a, &caption, &rec).unwrap();
        rec.save(&path).unwrap();
        let again = summarize_clusters(&a, &caption, &ReplaySummarizer::load(&path).unwrap()).unwrap();
        assert_eq!(live, again);
    }
}
