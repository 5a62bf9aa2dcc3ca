use hdbscan::{DistanceMetric, Hdbscan, HdbscanHyperParams};

use crate::compare::cosine_distance_slices;
use crate::error::{Error, Result};

use super::{AtlasConfig, ClusterMetric};

/// Renumbers cluster ids in order of first appearance; noise stays `-1`.
pub fn canonical_labels(raw: &[i32]) -> Vec<i32> {
    let mut seen: Vec<i32> = Vec::new();
    raw.iter()
        .map(|&l| {
            if l < 0 {
                return -1;
            }
            match seen.iter().position(|&s| s == l) {
                Some(k) => k as i32,
                None => {
                    seen.push(l);
                    (seen.len() - 1) as i32
                }
            }
        })
        .collect()
}

fn pairwise<T: Copy + Into<f64>>(rows: &[&[T]], metric: ClusterMetric) -> Result<Vec<Vec<f64>>> {
    let n = rows.len();
    let mut m = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = match metric {
                ClusterMetric::Euclidean => rows[i]
                    .iter()
                    .zip(rows[j].iter())
                    .map(|(&a, &b)| {
                        let d = a.into() - b.into();
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt(),
                ClusterMetric::Cosine => cosine_distance_slices(rows[i], rows[j])?,
            };
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// Density-based cluster labels for `rows`; `-1` marks noise and cluster ids
/// are contiguous from 0 in order of first appearance.
pub fn cluster<T: Copy + Into<f64>>(rows: &[&[T]], metric: ClusterMetric, config: &AtlasConfig) -> Result<Vec<i32>> {
    let n = rows.len();
    let needed = config.cluster_min_size.max(2);
    if n < needed {
        return Err(Error::TooFewPoints { needed, got: n });
    }
    if config.cluster_min_size < 2 || config.cluster_min_samples < 1 {
        return Err(Error::InvalidConfig(
            "cluster_min_size must be at least 2 and cluster_min_samples at least 1".into(),
        ));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != rows[0].len()) {
        return Err(Error::LengthMismatch {
            expected: rows[0].len(),
            actual: r.len(),
        });
    }
    if rows.iter().any(|r| r.iter().any(|&x| !x.into().is_finite())) {
        return Err(Error::InvalidConfig("cluster input contains a non-finite value".into()));
    }
    let dist = pairwise(rows, metric)?;
    let hp = HdbscanHyperParams::builder()
        .min_cluster_size(config.cluster_min_size)
        .min_samples(config.cluster_min_samples.min(n - 1))
        .allow_single_cluster(config.allow_single_cluster)
        .dist_metric(DistanceMetric::Precalculated)
        .build();
    let raw = Hdbscan::new(&dist, hp)
        .cluster()
        .map_err(|e| Error::Engine(e.to_string()))?;
    Ok(canonical_labels(&raw))
}
