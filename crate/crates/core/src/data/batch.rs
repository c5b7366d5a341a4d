use rand::seq::SliceRandom;

use crate::data::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Shuffles sample indices with a generator seeded from `epoch_seed`, then
/// cuts them into contiguous batches. A final short batch is kept.
pub fn batch_iter(ds: &Dataset, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if batch_size > ds.len() {
        return Err(Error::Config(format!(
            "batch size {batch_size} exceeds dataset size {}",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut seed::rng(epoch_seed));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
