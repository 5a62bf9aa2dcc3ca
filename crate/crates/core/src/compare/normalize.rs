use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{DistanceMatrix, Normalization};

/// Axis along which [`normalize_std`] computes its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdAxis {
    /// Per row: statistics over the concepts of one descriptor.
    PerDescriptor,
    /// Per column: statistics over the descriptors for one concept.
    #[default]
    PerConcept,
}

impl std::str::FromStr for StdAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_descriptor" | "per-descriptor" | "row" => Ok(StdAxis::PerDescriptor),
            "per_concept" | "per-concept" | "column" => Ok(StdAxis::PerConcept),
            other => Err(Error::InvalidConfig(format!("unknown std axis `{other}`"))),
        }
    }
}

fn require_raw(d: &DistanceMatrix) -> Result<()> {
    if d.is_raw() {
        Ok(())
    } else {
        Err(Error::AlreadyNormalized(d.normalization.name().into()))
    }
}

/// Subtracts each descriptor's mean distance over all target concepts.
pub fn normalize_mean(d: &DistanceMatrix) -> Result<DistanceMatrix> {
    require_raw(d)?;
    let mut mu = Vec::with_capacity(d.rows());
    let values = d
        .values
        .iter()
        .map(|row| {
            let m = row.iter().sum::<f64>() / row.len() as f64;
            mu.push(m);
            row.iter().map(|x| x - m).collect()
        })
        .collect();
    Ok(DistanceMatrix {
        values,
        descriptor_ids: d.descriptor_ids.clone(),
        concept_ids: d.concept_ids.clone(),
        normalization: Normalization::MeanCentered { mu },
        projector: None,
    })
}

fn population_stats(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardizes distances to zero mean and unit population variance along `axis`.
pub fn normalize_std(d: &DistanceMatrix, axis: StdAxis) -> Result<DistanceMatrix> {
    require_raw(d)?;
    let (rows, cols) = (d.rows(), d.cols());
    let mut values = d.values.clone();
    let (mu, sigma): (Vec<f64>, Vec<f64>) = match axis {
        StdAxis::PerDescriptor => (0..rows).map(|i| population_stats(d.values[i].iter().copied())).unzip(),
        StdAxis::PerConcept => (0..cols)
            .map(|j| population_stats(d.values.iter().map(|r| r[j])))
            .unzip(),
    };
    if let Some(k) = sigma.iter().position(|&s| s <= 0.0 || !s.is_finite()) {
        let what = match axis {
            StdAxis::PerDescriptor => format!("row {k} (descriptor `{}`)", d.descriptor_ids[k]),
            StdAxis::PerConcept => format!("column {k} (concept `{}`)", d.concept_ids[k]),
        };
        return Err(Error::ZeroVariance(what));
    }
    for (i, row) in values.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let k = match axis {
                StdAxis::PerDescriptor => i,
                StdAxis::PerConcept => j,
            };
            *x = (*x - mu[k]) / sigma[k];
        }
    }
    Ok(DistanceMatrix {
        values,
        descriptor_ids: d.descriptor_ids.clone(),
        concept_ids: d.concept_ids.clone(),
        normalization: Normalization::StdScaled { axis, mu, sigma },
        projector: None,
    })
}
