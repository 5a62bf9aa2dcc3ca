use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{Exchange, SummarizerClient};

use super::RankingResult;

/// Captions per end of the ranking included in the prompt.
const DEFAULT_TAIL: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub target_concept_id: String,
    pub exchange: Exchange,
}

fn caption_lines<'a>(
    ranking: &'a RankingResult,
    caption: &'a dyn Fn(&str) -> String,
) -> impl Iterator<Item = String> + 'a {
    ranking
        .ranked
        .iter()
        .map(move |r| format!("{:+.4}\t{}", r.score, caption(&r.descriptor_id)))
}

/// Prompt listing the captions at both ends of `ranking`.
///
/// `caption` maps a descriptor id to its text. The most target-aligned
/// captions come first.
pub fn ranking_prompt(ranking: &RankingResult, caption: &dyn Fn(&str) -> String, tail: usize) -> String {
    let lines: Vec<String> = caption_lines(ranking, caption).collect();
    let mut p = format!(
        "The captions below are ranked by how strongly each one's image representation aligns with `{}`",
        ranking.target_concept_id
    );
    if let Some(other) = &ranking.reference_concept_id {
        p.push_str(&format!(" rather than `{other}`"));
    }
    p.push_str(". Lower scores mean closer alignment.\n");
    if lines.len() <= 2 * tail {
        p.push_str("\nAll captions:\n");
        p.push_str(&lines.join("\n"));
    } else {
        p.push_str(&format!("\nMost aligned ({tail}):\n"));
        p.push_str(&lines[..tail].join("\n"));
        p.push_str(&format!("\n\nLeast aligned ({tail}):\n"));
        p.push_str(&lines[lines.len() - tail..].join("\n"));
    }
    p.push_str("\n\nSummarize what distinguishes the two ends of this ranking.");
    p
}

/// Sends one summary request for `ranking`. The request is never retried or rewritten.
pub fn llm_summarize_ranking(
    ranking: &RankingResult,
    caption: &dyn Fn(&str) -> String,
    client: &dyn SummarizerClient,
) -> Result<RankingSummary> {
    if ranking.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut tail = DEFAULT_TAIL;
    let mut prompt = ranking_prompt(ranking, caption, tail);
    while prompt.chars().count() > client.max_prompt_chars() && tail > 1 {
        tail /= 2;
        prompt = ranking_prompt(ranking, caption, tail);
    }
    Ok(RankingSummary {
        target_concept_id: ranking.target_concept_id.clone(),
        exchange: client.summarize(&prompt)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::RankedDescriptor;
    use crate::llm::{EchoSummarizer, HttpSummarizer};
    use std::time::Duration;

    fn ranking(n: usize) -> RankingResult {
        RankingResult {
            target_concept_id: "female".into(),
            reference_concept_id: Some("male".into()),
            normalization: "mean_centered".into(),
            ranked: (0..n)
                .map(|i| RankedDescriptor {
                    descriptor_id: format!("d{i:02}"),
                    score: i as f64 / 100.0 - 0.1,
                })
                .collect(),
        }
    }

    fn caption(id: &str) -> String {
        format!("caption for {id}")
    }

    #[test]
    fn echo_contains_both_ends() {
        let s = llm_summarize_ranking(&ranking(40), &caption, &EchoSummarizer).unwrap();
        assert!(s.exchange.text.contains("caption for d00"));
        assert!(s.exchange.text.contains("caption for d39"));
        assert!(!s.exchange.text.contains("caption for d20"));
    }

    #[test]
    fn endpoint_down_is_reported() {
        let c = HttpSummarizer::new("http://127.0.0.1:9/v1", "m", Duration::from_secs(2));
        let r = ranking(3);
        let err = llm_summarize_ranking(&r, &caption, &c).unwrap_err();
        assert!(matches!(err, Error::EndpointUnavailable(_)), "{err:?}");
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn empty_ranking_rejected() {
        assert!(matches!(
            llm_summarize_ranking(&ranking(0), &caption, &EchoSummarizer),
            Err(Error::EmptyInput)
        ));
    }
}
