use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compare::cosine_distance_slices;
use crate::error::{Error, Result};
use crate::hvector::HVector;

/// Fraction of each cluster's members carrying each category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOverlap {
    /// Non-noise cluster ids, ascending; row order of `fractions`.
    pub clusters: Vec<i32>,
    /// Sorted distinct categories; column order of `fractions`.
    pub categories: Vec<String>,
    pub fractions: Vec<Vec<f64>>,
}

pub fn cluster_overlap(labels: &[i32], categories: &[String]) -> Result<ClusterOverlap> {
    if labels.len() != categories.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: categories.len(),
        });
    }
    let mut cats: Vec<String> = categories.to_vec();
    cats.sort();
    cats.dedup();
    let mut counts: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (&l, c) in labels.iter().zip(categories) {
        if l < 0 {
            continue;
        }
        let k = cats.binary_search(c).expect("category listed");
        counts.entry(l).or_insert_with(|| vec![0; cats.len()])[k] += 1;
    }
    let clusters = counts.keys().copied().collect();
    let fractions = counts
        .values()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter().map(|&c| c as f64 / total as f64).collect()
        })
        .collect();
    Ok(ClusterOverlap {
        clusters,
        categories: cats,
        fractions,
    })
}

/// Centroid of each non-noise cluster, accumulated in f64. Keys ascending.
pub fn cluster_centroids(vectors: &[HVector], labels: &[i32]) -> Result<BTreeMap<i32, Vec<f64>>> {
    if vectors.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: vectors.len(),
            actual: labels.len(),
        });
    }
    let mut sums: BTreeMap<i32, (Vec<f64>, usize)> = BTreeMap::new();
    for (v, &l) in vectors.iter().zip(labels) {
        if l < 0 {
            continue;
        }
        let entry = sums.entry(l).or_insert_with(|| (vec![0.0; v.len()], 0));
        if entry.0.len() != v.len() {
            return Err(Error::LengthMismatch {
                expected: entry.0.len(),
                actual: v.len(),
            });
        }
        for (a, &x) in entry.0.iter_mut().zip(&v.values) {
            *a += x as f64;
        }
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(l, (s, n))| (l, s.into_iter().map(|x| x / n as f64).collect()))
        .collect())
}

/// Supported inter-cluster metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterClusterMetric {
    #[default]
    CentroidCosine,
}

/// Cosine distance between cluster centroids, rows and columns in ascending cluster id.
pub fn inter_cluster_distance(
    vectors: &[HVector],
    labels: &[i32],
    metric: InterClusterMetric,
) -> Result<Vec<Vec<f64>>> {
    let InterClusterMetric::CentroidCosine = metric;
    let centroids: Vec<Vec<f64>> = cluster_centroids(vectors, labels)?.into_values().collect();
    if centroids.len() < 2 {
        return Err(Error::SingleCluster(centroids.len()));
    }
    let k = centroids.len();
    let mut m = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in (a + 1)..k {
            let d = cosine_distance_slices(&centroids[a], &centroids[b])?;
            m[a][b] = d;
            m[b][a] = d;
        }
    }
    Ok(m)
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings; noise counts as its own label.
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut table: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    let mut ra: BTreeMap<i32, usize> = BTreeMap::new();
    let mut rb: BTreeMap<i32, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len());
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Mean silhouette under Euclidean distance, over points not labeled noise.
pub fn silhouette(rows: &[Vec<f64>], labels: &[i32]) -> Result<f64> {
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    let dist = |i: usize, j: usize| -> f64 {
        rows[i]
            .iter()
            .zip(&rows[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut clusters: Vec<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    clusters.sort();
    clusters.dedup();
    if clusters.len() < 2 {
        return Err(Error::SingleCluster(clusters.len()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..rows.len() {
        if labels[i] < 0 {
            continue;
        }
        let mut own = (0.0, 0usize);
        let mut other: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
        for j in 0..rows.len() {
            if i == j || labels[j] < 0 {
                continue;
            }
            let slot = if labels[j] == labels[i] {
                &mut own
            } else {
                other.entry(labels[j]).or_default()
            };
            slot.0 += dist(i, j);
            slot.1 += 1;
        }
        count += 1;
        if own.1 == 0 {
            continue;
        }
        let a = own.0 / own.1 as f64;
        let b = other.values().map(|(s, n)| s / *n as f64).fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn hv(v: Vec<f32>) -> HVector {
        HVector::from_values(v).unwrap()
    }

    #[test]
    fn identity_overlap() {
        let o = cluster_overlap(&[0, 0, 1, 1], &s(&["a", "a", "b", "b"])).unwrap();
        assert_eq!(o.fractions, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn half_split_and_noise_ignored() {
        let o = cluster_overlap(&[0, 0, -1], &s(&["a", "b", "c"])).unwrap();
        assert_eq!(o.clusters, vec![0]);
        assert_eq!(o.fractions, vec![vec![0.5, 0.5, 0.0]]);
        assert!(cluster_overlap(&[0], &s(&[])).is_err());
    }

    #[test]
    fn overlap_matches_counting_oracle() {
        let labels = [0, 1, 2, 0, 1, -1, 2, 2, 0, 1, 1, 0, -1, 2, 0, 1, 2, 0, 1, 2];
        let cats = s(&[
            "x", "y", "z", "x", "x", "y", "z", "y", "y", "y", "z", "x", "z", "z", "x", "y", "x", "z", "y", "z",
        ]);
        let o = cluster_overlap(&labels, &cats).unwrap();
        for (r, &c) in o.clusters.iter().enumerate() {
            let members: Vec<usize> = (0..20).filter(|&i| labels[i] == c).collect();
            for (k, cat) in o.categories.iter().enumerate() {
                let hits = members.iter().filter(|&&i| &cats[i] == cat).count();
                assert!((o.fractions[r][k] - hits as f64 / members.len() as f64).abs() < 1e-12);
            }
            assert!((o.fractions[r].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_and_antipodal_centroids() {
        let v = vec![hv(vec![1.0, 2.0]), hv(vec![1.0, 2.0]), hv(vec![-1.0, -2.0])];
        let same = inter_cluster_distance(&v[..2], &[0, 1], InterClusterMetric::CentroidCosine).unwrap();
        assert!(same[0][1].abs() < 1e-12);
        let anti = inter_cluster_distance(&v[1..], &[0, 1], InterClusterMetric::CentroidCosine).unwrap();
        assert!((anti[0][1] - 2.0).abs() < 1e-12);
        assert!(matches!(
            inter_cluster_distance(&v, &[0, 0, 0], InterClusterMetric::CentroidCosine),
            Err(Error::SingleCluster(1))
        ));
    }

    #[test]
    fn three_clusters_match_centroid_oracle() {
        let data: Vec<Vec<f32>> = vec![
            vec![1.0, 0.2, 0.1],
            vec![0.9, 0.1, 0.3],
            vec![0.1, 1.0, 0.2],
            vec![0.2, 0.8, 0.0],
            vec![0.3, 0.1, 1.1],
            vec![0.0, 0.3, 0.9],
            vec![5.0, 5.0, 5.0],
        ];
        let labels = [0, 0, 1, 1, 2, 2, -1];
        let v: Vec<HVector> = data.iter().cloned().map(hv).collect();
        let m = inter_cluster_distance(&v, &labels, InterClusterMetric::CentroidCosine).unwrap();
        let centroid = |c: i32| -> Vec<f64> {
            let mut acc = [0.0f64; 3];
            let mut n = 0.0;
            for (row, &l) in data.iter().zip(&labels) {
                if l == c {
                    for k in 0..3 {
                        acc[k] += row[k] as f64;
                    }
                    n += 1.0;
                }
            }
            acc.iter().map(|x| x / n).collect()
        };
        for a in 0..3 {
            for b in 0..3 {
                let (ca, cb) = (centroid(a), centroid(b));
                let dot: f64 = (0..3).map(|k| ca[k] * cb[k]).sum();
                let na: f64 = ca.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = cb.iter().map(|x| x * x).sum::<f64>().sqrt();
                let expected = if a == b { 0.0 } else { 1.0 - dot / (na * nb) };
                assert!((m[a as usize][b as usize] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // contingency [[2,0],[1,1]]; hand computation gives 0
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_of_tight_pairs() {
        let rows = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let s = silhouette(&rows, &[0, 0, 1, 1]).unwrap();
        // a = 1 everywhere; b = 10.5 for the outer points, 9.5 for the inner ones
        let expected = ((9.5 / 10.5) + (8.5 / 9.5)) / 2.0;
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
    }

    proptest! {
        #[test]
        fn inter_cluster_scale_invariant_on_unit_vectors(
            rows in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 4), 6),
            scale in 0.5f32..4.0,
        ) {
            prop_assume!(rows.iter().all(|r| r.iter().map(|x| x * x).sum::<f32>() > 0.01));
            let unit: Vec<Vec<f32>> = rows.iter().map(|r| {
                let n = r.iter().map(|x| x * x).sum::<f32>().sqrt();
                r.iter().map(|x| x / n).collect()
            }).collect();
            let labels = [0, 0, 1, 1, 2, 2];
            let a = inter_cluster_distance(&unit.iter().cloned().map(hv).collect::<Vec<_>>(), &labels, InterClusterMetric::CentroidCosine);
            let b = inter_cluster_distance(&unit.iter().map(|r| hv(r.iter().map(|x| x * scale).collect())).collect::<Vec<_>>(), &labels, InterClusterMetric::CentroidCosine);
            if let (Ok(a), Ok(b)) = (a, b) {
                for i in 0..3 {
                    prop_assert_eq!(a[i][i], 0.0);
                    for j in 0..3 {
                        prop_assert_eq!(a[i][j], a[j][i]);
                        prop_assert!((a[i][j] - b[i][j]).abs() < 1e-5);
                    }
                }
            }
        }
    }
}
