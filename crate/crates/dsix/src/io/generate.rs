//! Deterministic random-walk benchmark data.
//!
//! Series `i` is the cumulative sum of unit-normal steps drawn from stream
//! `i` of a counter-based generator seeded once for the whole collection,
//! then z-normalized. The same (count, length, seed) triple produces
//! byte-identical files on every platform.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Error;
use crate::io::{write_dataset, IoError};
use crate::series::{znormalize, Dataset};

/// Generates the collection in memory, z-normalized, flagged as such.
pub fn random_walk_dataset(count: usize, length: usize, seed: u64) -> Result<Dataset, Error> {
    if count == 0 || length == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut values = Vec::with_capacity(count * length);
    let mut walk = vec![0.0f64; length];
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut level = 0.0f64;
        for slot in walk.iter_mut() {
            let step: f64 = StandardNormal.sample(&mut rng);
            level += step;
            *slot = level;
        }
        let norm = znormalize(&walk);
        values.extend(norm.values.iter().map(|&v| v as f32));
    }
    let mut dataset = Dataset::new(values, length)?;
    dataset.set_normalized(true);
    Ok(dataset)
}

/// Generates and writes a `DSIX` file.
pub fn generate_random_walk(
    count: usize,
    length: usize,
    seed: u64,
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let dataset = random_walk_dataset(count, length, seed)?;
    write_dataset(path, &dataset)
}
