use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDescriptor {
    pub descriptor_id: String,
    pub score: f64,
}

/// Descriptors ordered most aligned with the target first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub target_concept_id: String,
    /// The other concept when scoring a pair; scores are then target minus other.
    pub reference_concept_id: Option<String>,
    pub normalization: String,
    pub ranked: Vec<RankedDescriptor>,
}

impl RankingResult {
    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }
}

/// Sorts descriptors ascending by their relative distance to concept `target`.
///
/// With two concepts the score is `d'[target] - d'[other]`; with more it is
/// `d'[target]` itself, which is only meaningful after normalization.
pub fn rank_descriptors(d: &DistanceMatrix, target: usize) -> Result<RankingResult> {
    let n = d.cols();
    if target >= n {
        return Err(Error::BadIndex { index: target, len: n });
    }
    if d.is_raw() && n > 2 {
        return Err(Error::InvalidConfig(
            "raw distances can only be ranked against a pair of concepts; normalize first".into(),
        ));
    }
    let other = (n == 2).then(|| 1 - target);
    let mut ranked: Vec<RankedDescriptor> = d
        .values
        .iter()
        .zip(&d.descriptor_ids)
        .map(|(row, id)| RankedDescriptor {
            descriptor_id: id.clone(),
            score: match other {
                Some(o) => row[target] - row[o],
                None => row[target],
            },
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then_with(|| a.descriptor_id.cmp(&b.descriptor_id))
    });
    Ok(RankingResult {
        target_concept_id: d.concept_ids[target].clone(),
        reference_concept_id: other.map(|o| d.concept_ids[o].clone()),
        normalization: d.normalization.name().into(),
        ranked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::normalize_mean;
    use proptest::prelude::*;

    fn raw(values: Vec<Vec<f64>>, cols: usize) -> DistanceMatrix {
        let ids = (0..values.len()).map(|i| format!("d{i:02}")).collect();
        DistanceMatrix::from_raw(values, ids, (0..cols).map(|j| format!("c{j}")).collect()).unwrap()
    }

    fn order(r: &RankingResult) -> Vec<String> {
        r.ranked.iter().map(|x| x.descriptor_id.clone()).collect()
    }

    #[test]
    fn hand_set_rows_match_manual_sort() {
        let m = normalize_mean(&raw(
            vec![vec![0.5, 0.2, 0.2], vec![0.1, 0.4, 0.4], vec![0.3, 0.3, 0.3]],
            3,
        ))
        .unwrap();
        let r = rank_descriptors(&m, 0).unwrap();
        assert_eq!(order(&r), ["d01", "d02", "d00"]);
        assert!((r.ranked[0].score - (0.1 - 0.3)).abs() < 1e-12);
        assert_eq!(r.reference_concept_id, None);
    }

    #[test]
    fn any_target_of_many_concepts() {
        let m = normalize_mean(&raw(vec![vec![0.5, 0.2, 0.9], vec![0.1, 0.4, 0.2]], 3)).unwrap();
        for t in 0..3 {
            let r = rank_descriptors(&m, t).unwrap();
            assert_eq!(r.reference_concept_id, None);
            assert_eq!(r.len(), 2);
        }
    }

    #[test]
    fn ties_break_by_id() {
        let m = DistanceMatrix::from_raw(
            vec![vec![0.2, 0.4], vec![0.2, 0.4], vec![0.1, 0.5]],
            vec!["b".into(), "a".into(), "z".into()],
            vec!["f".into(), "m".into()],
        )
        .unwrap();
        let r = rank_descriptors(&m, 0).unwrap();
        assert_eq!(order(&r), ["z", "a", "b"]);
    }

    #[test]
    fn raw_pair_scores_are_differences() {
        let r = rank_descriptors(&raw(vec![vec![0.30, 0.25]], 2), 0).unwrap();
        assert!((r.ranked[0].score - 0.05).abs() < 1e-12);
        assert_eq!(r.reference_concept_id.as_deref(), Some("c1"));
    }

    #[test]
    fn errors() {
        let m = raw(vec![vec![0.1, 0.2, 0.3]], 3);
        assert!(matches!(
            rank_descriptors(&m, 3),
            Err(Error::BadIndex { index: 3, len: 3 })
        ));
        assert!(matches!(rank_descriptors(&m, 0), Err(Error::InvalidConfig(_))));
    }

    proptest! {
        #[test]
        fn row_offsets_do_not_change_mean_ranking(
            rows in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 3), 0.0f64..1.0), 2..12)
        ) {
            let base: Vec<Vec<f64>> = rows.iter().map(|(r, _)| r.clone()).collect();
            let shifted: Vec<Vec<f64>> = rows.iter().map(|(r, c)| r.iter().map(|x| x + c).collect()).collect();
            let a = rank_descriptors(&normalize_mean(&raw(base, 3)).unwrap(), 1).unwrap();
            let b = rank_descriptors(&normalize_mean(&raw(shifted, 3)).unwrap(), 1).unwrap();
            for (x, y) in a.ranked.iter().zip(&b.ranked) {
                prop_assert!((x.score - y.score).abs() < 1e-9);
            }
        }

        #[test]
        fn pair_mean_order_equals_difference_order(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 2), 2..12)
        ) {
            let diffs: Vec<f64> = rows.iter().map(|r| r[0] - r[1]).collect();
            let r = rank_descriptors(&normalize_mean(&raw(rows, 2)).unwrap(), 0).unwrap();
            let mut expected: Vec<(f64, String)> = diffs.iter().enumerate().map(|(i, d)| (*d, format!("d{i:02}"))).collect();
            expected.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            for (got, (d, _)) in r.ranked.iter().zip(&expected) {
                prop_assert!((got.score - d).abs() < 1e-9);
            }
        }
    }
}
