use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Groups example indices into batches whose padded size
/// `count * max_length` stays within `budget`. Examples are grouped by
/// length (ties in random order) and the batch order is shuffled; no
/// example is split or dropped.
pub fn token_batches(lengths: &[usize], budget: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if let Some((i, &l)) = lengths.iter().enumerate().find(|(_, &l)| l > budget) {
        return Err(Error::Config(format!(
            "train.batch_tokens {budget} is smaller than example {i} of length {l}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut max = 0;
    for i in order {
        let m = max.max(lengths[i]);
        if !cur.is_empty() && (cur.len() + 1) * m > budget {
            batches.push(std::mem::take(&mut cur));
            max = 0;
        }
        max = max.max(lengths[i]);
        cur.push(i);
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches.shuffle(&mut rng);
    Ok(batches)
}
