//! Unsupervised maps of stored vectors: 2-D embedding, density clustering,
//! cluster/category overlap, centroid distances and text summaries.

mod cluster;
mod embed;
mod metrics;
mod summarize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use cluster::{canonical_labels, cluster};
pub use embed::{embed_2d, min_points_for};
pub use metrics::{
    adjusted_rand_index, cluster_centroids, cluster_overlap, inter_cluster_distance, silhouette, ClusterOverlap,
    InterClusterMetric,
};
pub use summarize::{cluster_prompt, summarize_clusters, ClusterSummaries};

use crate::error::{Error, Result};
use crate::hvector::HVector;

/// Which representation the clusterer sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSpace {
    /// The full-dimensional H-space vectors.
    #[default]
    Vectors,
    /// The 2-D embedding.
    Embedding,
}

impl std::str::FromStr for ClusterSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vectors" | "hspace" => Ok(Self::Vectors),
            "embedding" | "2d" => Ok(Self::Embedding),
            other => Err(Error::InvalidConfig(format!("unknown cluster space `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMetric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for ClusterMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::InvalidConfig(format!("unknown cluster metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasConfig {
    pub embed_perplexity: f64,
    pub embed_seed: u64,
    pub embed_epochs: usize,
    pub cluster_min_size: usize,
    pub cluster_min_samples: usize,
    pub cluster_space: ClusterSpace,
    /// Metric for clustering full vectors; the embedding is always Euclidean.
    pub cluster_metric: ClusterMetric,
    pub allow_single_cluster: bool,
    /// Concurrent summary requests.
    pub summary_concurrency: usize,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            embed_perplexity: 30.0,
            embed_seed: 0,
            embed_epochs: 1000,
            cluster_min_size: 5,
            cluster_min_samples: 5,
            cluster_space: ClusterSpace::Vectors,
            cluster_metric: ClusterMetric::Euclidean,
            allow_single_cluster: false,
            summary_concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptAtlas {
    pub record_ids: Vec<String>,
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<i32>,
    pub clustered_on: ClusterSpace,
    /// Category of each record when one was supplied.
    pub categories: Option<Vec<String>>,
    pub overlap: Option<ClusterOverlap>,
    /// Centroid cosine distances in ascending cluster id; empty with fewer than two clusters.
    pub inter_cluster: Vec<Vec<f64>>,
    pub summaries: BTreeMap<i32, String>,
    pub summary_errors: BTreeMap<i32, String>,
    pub config: AtlasConfig,
}

impl ConceptAtlas {
    pub fn cluster_ids(&self) -> Vec<i32> {
        let mut ids: Vec<i32> = self.labels.iter().copied().filter(|&l| l >= 0).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn members(&self, cluster: i32) -> Vec<&str> {
        self.labels
            .iter()
            .zip(&self.record_ids)
            .filter(|(&l, _)| l == cluster)
            .map(|(_, id)| id.as_str())
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }
}

/// Embeds, clusters and measures `vectors`. Summaries are left empty.
pub fn build_atlas(
    record_ids: Vec<String>,
    vectors: &[HVector],
    categories: Option<Vec<String>>,
    config: &AtlasConfig,
) -> Result<ConceptAtlas> {
    if record_ids.len() != vectors.len() {
        return Err(Error::LengthMismatch {
            expected: vectors.len(),
            actual: record_ids.len(),
        });
    }
    let points = embed_2d(vectors, config)?;
    let labels = match config.cluster_space {
        ClusterSpace::Vectors => {
            let rows: Vec<&[f32]> = vectors.iter().map(|v| v.values.as_slice()).collect();
            cluster(&rows, config.cluster_metric, config)?
        }
        ClusterSpace::Embedding => {
            let rows: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
            cluster(&rows, ClusterMetric::Euclidean, config)?
        }
    };
    let overlap = categories.as_ref().map(|c| cluster_overlap(&labels, c)).transpose()?;
    let inter_cluster = match inter_cluster_distance(vectors, &labels, InterClusterMetric::CentroidCosine) {
        Ok(m) => m,
        Err(Error::SingleCluster(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(ConceptAtlas {
        record_ids,
        points,
        labels,
        clustered_on: config.cluster_space,
        categories,
        overlap,
        inter_cluster,
        summaries: BTreeMap::new(),
        summary_errors: BTreeMap::new(),
        config: config.clone(),
    })
}
