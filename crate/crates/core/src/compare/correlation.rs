use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
}

fn check(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DegenerateInput(format!(
            "series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 paired values, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value".into()));
    }
    Ok(())
}

fn pearson_unchecked(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::DegenerateInput("zero variance".into()));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    pearson_unchecked(a, b)
}

/// 1-based ranks, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            out[k] = avg;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check(a, b)?;
    pearson_unchecked(&ranks(a), &ranks(b))
}

/// Agreement between per-profession deltas measured under two prompt variants.
pub fn variant_correlation(deltas_a: &[f64], deltas_b: &[f64]) -> Result<Correlation> {
    Ok(Correlation {
        pearson: pearson(deltas_a, deltas_b)?,
        spearman: spearman(deltas_a, deltas_b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn self_and_negation() {
        let a = [0.3, -0.1, 0.7, 0.2, 0.05];
        let c = variant_correlation(&a, &a).unwrap();
        assert!((c.pearson - 1.0).abs() < 1e-12 && (c.spearman - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let c = variant_correlation(&a, &neg).unwrap();
        assert!((c.pearson + 1.0).abs() < 1e-12 && (c.spearman + 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_point_hand_value() {
        let c = variant_correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        // sum of squared deviations 5 each, cross term 4
        assert_eq!(c.pearson, 0.8);
        assert_eq!(c.spearman, 0.8);
    }

    #[test]
    fn tied_ranks_average() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            variant_correlation(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            variant_correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            variant_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    proptest! {
        #[test]
        fn affine_and_monotone_invariance(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..20),
            scale in 0.1f64..10.0,
            shift in -3.0f64..3.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let Ok(base) = variant_correlation(&a, &b) else { return Ok(()); };
            let affine: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
            prop_assert!((pearson(&a, &affine).unwrap() - base.pearson).abs() < 1e-9);
            let mono: Vec<f64> = b.iter().map(|x| x.exp()).collect();
            prop_assert!((spearman(&a, &mono).unwrap() - base.spearman).abs() < 1e-12);
        }
    }
}
