use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hvector::HVector;

use super::distance::cosine_distance_slices;
use super::{DistanceMatrix, Normalization};

/// Relative eigenvalue threshold below which a direction counts as absent.
const RANK_TOL: f64 = 1e-10;

/// What is subtracted from concept and descriptor vectors before projecting.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Centering {
    None,
    /// The mean of all concept vectors.
    #[default]
    Global,
    /// The mean of the concept vectors sharing a seed, applied to the
    /// concepts and descriptors of that seed.
    PerSeed {
        concept_seeds: Vec<u64>,
        descriptor_seeds: Vec<u64>,
    },
}

impl Centering {
    fn name(&self) -> &'static str {
        match self {
            Centering::None => "none",
            Centering::Global => "global",
            Centering::PerSeed { .. } => "per_seed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PcaOptions {
    /// Number of components; defaults to the numeric rank of the centered concepts.
    pub rank: Option<usize>,
    pub centering: Centering,
}

/// Top-`M` principal axes of a concept set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjector {
    /// `M x D`, rows orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Mean of all concept vectors (zero when fitted uncentered).
    pub center: Vec<f64>,
    /// Per-seed concept means when fitted with per-seed centering.
    pub seed_centers: BTreeMap<u64, Vec<f64>>,
    /// Variance captured by each component, population normalized.
    pub explained_variance: Vec<f64>,
}

impl PcaProjector {
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    /// `W (v - center)`.
    pub fn project(&self, v: &[f32], center: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|w| w.iter().zip(v).zip(center).map(|((w, &x), c)| w * (x as f64 - c)).sum())
            .collect()
    }

    /// Center applicable to a vector of `seed` under the fitted centering.
    pub fn center_for(&self, seed: Option<u64>) -> &[f64] {
        seed.and_then(|s| self.seed_centers.get(&s))
            .map(Vec::as_slice)
            .unwrap_or(&self.center)
    }

    /// Fits to `concepts` under `opts`.
    pub fn fit(concepts: &[HVector], opts: &PcaOptions) -> Result<Self> {
        let n = concepts.len();
        if n < 2 {
            return Err(Error::DegenerateInput(format!(
                "need at least two target concepts, got {n}"
            )));
        }
        for c in &concepts[1..] {
            concepts[0].ensure_same_shape(c)?;
        }
        let dim = concepts[0].len();

        let mean = |idx: &[usize]| {
            let mut m = vec![0.0f64; dim];
            for &i in idx {
                for (a, &x) in m.iter_mut().zip(&concepts[i].values) {
                    *a += x as f64;
                }
            }
            m.iter_mut().for_each(|a| *a /= idx.len() as f64);
            m
        };
        let all: Vec<usize> = (0..n).collect();
        let mut seed_centers = BTreeMap::new();
        let (center, row_centers, max_rank): (Vec<f64>, Vec<Vec<f64>>, usize) = match &opts.centering {
            Centering::None => {
                let z = vec![0.0; dim];
                (z.clone(), vec![z; n], n)
            }
            Centering::Global => {
                let m = mean(&all);
                (m.clone(), vec![m; n], n - 1)
            }
            Centering::PerSeed { concept_seeds, .. } => {
                if concept_seeds.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        actual: concept_seeds.len(),
                    });
                }
                let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
                for (i, &s) in concept_seeds.iter().enumerate() {
                    groups.entry(s).or_default().push(i);
                }
                for (&s, idx) in &groups {
                    seed_centers.insert(s, mean(idx));
                }
                let rows = concept_seeds.iter().map(|s| seed_centers[s].clone()).collect();
                (mean(&all), rows, n - groups.len())
            }
        };
        if max_rank == 0 {
            return Err(Error::RankDeficient("centered concept set spans no directions".into()));
        }
        if let Some(m) = opts.rank.filter(|&m| m == 0 || m > max_rank) {
            return Err(Error::BadM { rank: m, max: max_rank });
        }

        let centered: Vec<Vec<f64>> = concepts
            .iter()
            .zip(&row_centers)
            .map(|(c, mu)| c.values.iter().zip(mu).map(|(&x, m)| x as f64 - m).collect())
            .collect();
        // Eigendecompose the n x n Gram matrix instead of the D x D covariance.
        let gram = DMatrix::from_fn(n, n, |i, j| {
            centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>()
        });
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let numeric_rank = order
            .iter()
            .filter(|&&k| top > 0.0 && eig.eigenvalues[k] > RANK_TOL * top)
            .count();
        // Unset rank takes every direction the concepts actually span.
        let m = opts.rank.unwrap_or(numeric_rank.min(max_rank));
        if m == 0 || m > numeric_rank {
            return Err(Error::RankDeficient(format!(
                "requested {m} components but concepts span {numeric_rank} dimension(s)"
            )));
        }

        let mut components = Vec::with_capacity(m);
        let mut explained_variance = Vec::with_capacity(m);
        for &k in &order[..m] {
            let lambda = eig.eigenvalues[k];
            let u = eig.eigenvectors.column(k);
            let scale = 1.0 / lambda.sqrt();
            let mut w = vec![0.0f64; dim];
            for (i, row) in centered.iter().enumerate() {
                let ui = u[i] * scale;
                for (a, x) in w.iter_mut().zip(row) {
                    *a += ui * x;
                }
            }
            // Deterministic sign: largest-magnitude entry positive.
            let pivot = w
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                w.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(w);
            explained_variance.push(lambda / n as f64);
        }
        Ok(Self {
            components,
            center,
            seed_centers,
            explained_variance,
        })
    }
}

/// Cosine distance with the convention that a zero projection is orthogonal to everything.
fn projected_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    match cosine_distance_slices(a, b) {
        Err(Error::ZeroVector) => Ok(1.0),
        other => other,
    }
}

/// Distances between descriptors and concepts inside the concepts' principal subspace.
pub fn normalize_pca(descriptors: &[HVector], concepts: &[HVector], opts: &PcaOptions) -> Result<DistanceMatrix> {
    let projector = PcaProjector::fit(concepts, opts)?;
    for d in descriptors {
        concepts[0].ensure_same_shape(d)?;
    }
    let (concept_seeds, descriptor_seeds) = match &opts.centering {
        Centering::PerSeed {
            concept_seeds,
            descriptor_seeds,
        } => {
            if descriptor_seeds.len() != descriptors.len() {
                return Err(Error::LengthMismatch {
                    expected: descriptors.len(),
                    actual: descriptor_seeds.len(),
                });
            }
            if let Some(s) = descriptor_seeds
                .iter()
                .find(|s| !projector.seed_centers.contains_key(s))
            {
                return Err(Error::MissingVariant(format!(
                    "no target concept vectors for descriptor seed {s}"
                )));
            }
            (
                concept_seeds.iter().map(|&s| Some(s)).collect(),
                descriptor_seeds.iter().map(|&s| Some(s)).collect(),
            )
        }
        _ => (vec![None; concepts.len()], vec![None; descriptors.len()]),
    };
    let pc: Vec<Vec<f64>> = concepts
        .iter()
        .zip(&concept_seeds)
        .map(|(c, &s)| projector.project(&c.values, projector.center_for(s)))
        .collect();
    let values = descriptors
        .iter()
        .zip(&descriptor_seeds)
        .map(|(d, &s)| {
            let pd = projector.project(&d.values, projector.center_for(s));
            pc.iter().map(|c| projected_distance(c, &pd)).collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(DistanceMatrix {
        values,
        descriptor_ids: (0..descriptors.len()).map(|i| i.to_string()).collect(),
        concept_ids: (0..concepts.len()).map(|j| j.to_string()).collect(),
        normalization: Normalization::PcaProjected {
            rank: projector.rank(),
            centering: opts.centering.name().into(),
            explained_variance: projector.explained_variance.clone(),
        },
        projector: Some(projector),
    })
}
