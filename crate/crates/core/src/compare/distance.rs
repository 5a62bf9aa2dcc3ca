use crate::error::{Error, Result};
use crate::hvector::HVector;

use super::{DistanceMatrix, Normalization};

/// `1 - cos(a, b)` computed in f64 and clamped to `[0, 2]`.
pub fn cosine_distance_slices<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

pub fn cosine_distance(a: &HVector, b: &HVector) -> Result<f64> {
    a.ensure_same_shape(b)?;
    cosine_distance_slices(&a.values, &b.values)
}

/// Raw descriptor-by-concept cosine distances with positional ids.
pub fn distance_matrix(descriptors: &[HVector], concepts: &[HVector]) -> Result<DistanceMatrix> {
    if concepts.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "need at least two target concepts, got {}",
            concepts.len()
        )));
    }
    let values = descriptors
        .iter()
        .map(|d| concepts.iter().map(|c| cosine_distance(d, c)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(DistanceMatrix {
        values,
        descriptor_ids: (0..descriptors.len()).map(|i| i.to_string()).collect(),
        concept_ids: (0..concepts.len()).map(|j| j.to_string()).collect(),
        normalization: Normalization::Raw,
        projector: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hv(v: &[f32]) -> HVector {
        HVector::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_antipodal_orthogonal() {
        let v = hv(&[0.3, -1.2, 4.0, 0.5]);
        let neg = hv(&[-0.3, 1.2, -4.0, -0.5]);
        assert_eq!(cosine_distance(&v, &v).unwrap(), 0.0);
        assert_eq!(cosine_distance(&v, &neg).unwrap(), 2.0);
        let e0 = hv(&[1.0, 0.0, 0.0, 0.0]);
        let e1 = hv(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(cosine_distance(&e0, &e1).unwrap(), 1.0);
    }

    #[test]
    fn zero_vector_and_shape_errors() {
        let z = hv(&[0.0, 0.0]);
        let v = hv(&[1.0, 0.0]);
        assert!(matches!(cosine_distance(&z, &v), Err(Error::ZeroVector)));
        let w = hv(&[1.0, 0.0, 0.0]);
        assert!(matches!(cosine_distance(&v, &w), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn self_matrix_has_zero_diagonal() {
        let vs = vec![hv(&[1.0, 2.0, 0.5]), hv(&[-1.0, 0.3, 2.0]), hv(&[0.1, 0.1, -3.0])];
        let m = distance_matrix(&vs, &vs).unwrap();
        for i in 0..3 {
            assert_eq!(m.values[i][i], 0.0);
        }
    }

    #[test]
    fn descriptor_equal_to_first_concept() {
        let c = vec![hv(&[1.0, 0.0]), hv(&[0.0, 1.0])];
        let m = distance_matrix(&[hv(&[1.0, 0.0])], &c).unwrap();
        assert_eq!(m.values, vec![vec![0.0, 1.0]]);
    }

    #[test]
    fn matches_double_loop_oracle() {
        let desc: Vec<Vec<f32>> = vec![
            vec![0.2, -0.7, 1.1, 0.4, 0.0],
            vec![1.3, 0.2, -0.3, 0.9, -1.0],
            vec![-0.6, 0.8, 0.5, -0.2, 0.3],
            vec![0.05, 0.05, 2.0, -1.5, 0.7],
        ];
        let conc: Vec<Vec<f32>> = vec![
            vec![1.0, 0.5, -0.5, 0.0, 0.2],
            vec![-0.4, 1.2, 0.3, 0.8, -0.1],
            vec![0.0, -0.9, 0.6, 1.4, 0.5],
        ];
        let m = distance_matrix(
            &desc.iter().map(|v| hv(v)).collect::<Vec<_>>(),
            &conc.iter().map(|v| hv(v)).collect::<Vec<_>>(),
        )
        .unwrap();
        for (i, d) in desc.iter().enumerate() {
            for (j, c) in conc.iter().enumerate() {
                let mut dot = 0.0f64;
                let mut nd = 0.0f64;
                let mut nc = 0.0f64;
                for k in 0..5 {
                    dot += d[k] as f64 * c[k] as f64;
                    nd += (d[k] as f64).powi(2);
                    nc += (c[k] as f64).powi(2);
                }
                let expected = 1.0 - dot / (nd.sqrt() * nc.sqrt());
                assert!((m.values[i][j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_concept_rejected() {
        assert!(matches!(
            distance_matrix(&[hv(&[1.0])], &[hv(&[1.0])]),
            Err(Error::DegenerateInput(_))
        ));
    }

    proptest! {
        #[test]
        fn range_symmetry_and_scale(
            pair in (2usize..32).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            let (a, b) = pair;
            prop_assume!(a.iter().any(|x| *x != 0.0) && b.iter().any(|x| *x != 0.0));
            let d = cosine_distance_slices(&a, &b).unwrap();
            prop_assert!((0.0..=2.0).contains(&d));
            prop_assert_eq!(d, cosine_distance_slices(&b, &a).unwrap());
            let sa: Vec<f64> = a.iter().map(|x| x * alpha).collect();
            let sb: Vec<f64> = b.iter().map(|x| x * beta).collect();
            prop_assert!((cosine_distance_slices(&sa, &sb).unwrap() - d).abs() < 1e-9);
        }
    }
}
