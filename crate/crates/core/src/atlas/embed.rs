use bhtsne::tSNE;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hvector::HVector;

use super::AtlasConfig;

/// Standard deviation of the random starting layout.
const INIT_STD: f64 = 1e-4;

/// Smallest input size the engine accepts for `perplexity`.
pub fn min_points_for(perplexity: f64) -> usize {
    (3.0 * perplexity).floor() as usize + 1
}

fn squared_euclidean(a: &&[f32], b: &&[f32]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Exact t-SNE layout of `vectors` in the plane.
///
/// The starting layout is drawn from `embed_seed` and the engine runs on a
/// single-thread pool, so equal inputs give bit-identical points.
pub fn embed_2d(vectors: &[HVector], config: &AtlasConfig) -> Result<Vec<[f64; 2]>> {
    let n = vectors.len();
    let p = config.embed_perplexity;
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidConfig(format!("perplexity must be positive, got {p}")));
    }
    let needed = min_points_for(p).max(p.floor() as usize + 1).max(3);
    if n < needed {
        return Err(Error::TooFewPoints { needed, got: n });
    }
    for v in &vectors[1..] {
        vectors[0].ensure_same_shape(v)?;
    }

    // The engine spreads exact duplicates apart; an all-identical input has
    // no structure to show, so it is collapsed onto the origin.
    if vectors[1..].iter().all(|v| v.values == vectors[0].values) {
        return Ok(vec![[0.0, 0.0]; n]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.embed_seed);
    let init: Vec<f64> = (0..2 * n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * INIT_STD
        })
        .collect();
    let data: Vec<&[f32]> = vectors.iter().map(|v| v.values.as_slice()).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Engine(e.to_string()))?;
    let flat = pool.install(|| {
        let mut tsne: tSNE<f64, &[f32]> = tSNE::new(&data);
        tsne.perplexity(p)
            .epochs(config.embed_epochs)
            .initial_embedding(init)
            .exact(squared_euclidean);
        tsne.embedding()
    });
    if let Some(i) = flat.iter().position(|x| !x.is_finite()) {
        return Err(Error::Engine(format!(
            "embedding produced a non-finite coordinate at point {}",
            i / 2
        )));
    }
    Ok(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
}
