use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::error::{Error, Result};

/// Seeded document-level subsample of `ceil(fraction * |docs|)` documents,
/// kept in original order.
pub fn sample_low_resource(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = corpus.len();
    // guard against 0.1 * 30 = 3.0000000000000004 style rounding up
    let k = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let k = k.min(n);
    if k == n {
        return Ok(corpus.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Corpus::new(picked.into_iter().map(|i| corpus.documents[i].clone()).collect())
}
