//! Cosine-distance statistics over H-space vectors.

mod correlation;
mod defaults;
mod distance;
mod normalize;
mod pca;
mod ranking;
mod summarize;

use serde::{Deserialize, Serialize};

pub use correlation::{pearson, spearman, variant_correlation, Correlation};
pub use defaults::{default_delta, profession_delta_table, DefaultDeltaResult, DeltaQuery, ProfessionDelta};
pub use distance::{cosine_distance, cosine_distance_slices, distance_matrix};
pub use normalize::{normalize_mean, normalize_std, StdAxis};
pub use pca::{normalize_pca, Centering, PcaOptions, PcaProjector};
pub use ranking::{rank_descriptors, RankedDescriptor, RankingResult};
pub use summarize::{llm_summarize_ranking, ranking_prompt, RankingSummary};

use crate::error::{Error, Result};

/// How a [`DistanceMatrix`] was normalized, with its fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    /// Row means subtracted.
    MeanCentered {
        mu: Vec<f64>,
    },
    /// Population standardization along `axis`.
    StdScaled {
        axis: StdAxis,
        mu: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// Cosine distances between projections onto concept principal axes.
    PcaProjected {
        rank: usize,
        centering: String,
        explained_variance: Vec<f64>,
    },
}

impl Normalization {
    pub fn name(&self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::MeanCentered { .. } => "mean_centered",
            Normalization::StdScaled { .. } => "std_scaled",
            Normalization::PcaProjected { .. } => "pca_projected",
        }
    }
}

/// Descriptor-by-concept distances. Rows are descriptors, columns concepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub values: Vec<Vec<f64>>,
    pub descriptor_ids: Vec<String>,
    pub concept_ids: Vec<String>,
    pub normalization: Normalization,
    #[serde(skip)]
    pub projector: Option<PcaProjector>,
}

impl DistanceMatrix {
    /// Wraps precomputed raw distances.
    pub fn from_raw(values: Vec<Vec<f64>>, descriptor_ids: Vec<String>, concept_ids: Vec<String>) -> Result<Self> {
        if values.len() != descriptor_ids.len() {
            return Err(Error::LengthMismatch {
                expected: descriptor_ids.len(),
                actual: values.len(),
            });
        }
        if let Some(row) = values.iter().find(|r| r.len() != concept_ids.len()) {
            return Err(Error::LengthMismatch {
                expected: concept_ids.len(),
                actual: row.len(),
            });
        }
        Ok(Self {
            values,
            descriptor_ids,
            concept_ids,
            normalization: Normalization::Raw,
            projector: None,
        })
    }

    /// Replaces the positional default ids.
    pub fn with_ids(mut self, descriptor_ids: Vec<String>, concept_ids: Vec<String>) -> Result<Self> {
        if descriptor_ids.len() != self.rows() {
            return Err(Error::LengthMismatch {
                expected: self.rows(),
                actual: descriptor_ids.len(),
            });
        }
        if concept_ids.len() != self.cols() {
            return Err(Error::LengthMismatch {
                expected: self.cols(),
                actual: concept_ids.len(),
            });
        }
        self.descriptor_ids = descriptor_ids;
        self.concept_ids = concept_ids;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.concept_ids.len()
    }

    pub fn is_raw(&self) -> bool {
        matches!(self.normalization, Normalization::Raw)
    }

    /// Entry-wise mean of equally shaped raw matrices, e.g. one per seed.
    pub fn mean_of(matrices: &[DistanceMatrix]) -> Result<DistanceMatrix> {
        let first = matrices.first().ok_or(Error::EmptyInput)?;
        let mut acc = vec![vec![0.0; first.cols()]; first.rows()];
        for m in matrices {
            if m.descriptor_ids != first.descriptor_ids || m.concept_ids != first.concept_ids {
                return Err(Error::InvalidConfig(
                    "matrices to average must share descriptor and concept ids".into(),
                ));
            }
            if m.normalization.name() != first.normalization.name() {
                return Err(Error::InvalidConfig(
                    "matrices to average must share a normalization".into(),
                ));
            }
            for (a, r) in acc.iter_mut().zip(&m.values) {
                for (x, y) in a.iter_mut().zip(r) {
                    *x += y;
                }
            }
        }
        let n = matrices.len() as f64;
        acc.iter_mut().flatten().for_each(|x| *x /= n);
        Ok(DistanceMatrix {
            values: acc,
            descriptor_ids: first.descriptor_ids.clone(),
            concept_ids: first.concept_ids.clone(),
            normalization: first.normalization.clone(),
            projector: None,
        })
    }

    /// Collapses a pooled multi-seed matrix to one row per `row_keys` value
    /// and one column per `col_keys` value, averaging the entries whose row
    /// and column come from the same seed.
    pub fn collapse_seeds(
        &self,
        row_keys: &[String],
        row_seeds: &[u64],
        col_keys: &[String],
        col_seeds: &[u64],
    ) -> Result<DistanceMatrix> {
        for (len, want) in [
            (row_keys.len(), self.rows()),
            (row_seeds.len(), self.rows()),
            (col_keys.len(), self.cols()),
            (col_seeds.len(), self.cols()),
        ] {
            if len != want {
                return Err(Error::LengthMismatch {
                    expected: want,
                    actual: len,
                });
            }
        }
        let distinct = |keys: &[String]| {
            let mut out: Vec<String> = Vec::new();
            for k in keys {
                if !out.contains(k) {
                    out.push(k.clone());
                }
            }
            out
        };
        let (rk, ck) = (distinct(row_keys), distinct(col_keys));
        let mut sum = vec![vec![0.0; ck.len()]; rk.len()];
        let mut count = vec![vec![0usize; ck.len()]; rk.len()];
        for (i, row) in self.values.iter().enumerate() {
            let a = rk.iter().position(|k| k == &row_keys[i]).expect("key listed");
            for (j, &v) in row.iter().enumerate() {
                if row_seeds[i] != col_seeds[j] {
                    continue;
                }
                let b = ck.iter().position(|k| k == &col_keys[j]).expect("key listed");
                sum[a][b] += v;
                count[a][b] += 1;
            }
        }
        for (a, row) in count.iter().enumerate() {
            if let Some(b) = row.iter().position(|&c| c == 0) {
                return Err(Error::MissingVariant(format!(
                    "`{}` and `{}` share no seed",
                    rk[a], ck[b]
                )));
            }
        }
        let values = sum
            .iter()
            .zip(&count)
            .map(|(s, c)| s.iter().zip(c).map(|(x, &n)| x / n as f64).collect())
            .collect();
        Ok(DistanceMatrix {
            values,
            descriptor_ids: rk,
            concept_ids: ck,
            normalization: self.normalization.clone(),
            projector: self.projector.clone(),
        })
    }
}
