//! Deterministic batched Monte Carlo.
//!
//! Trials are cut into fixed-size batches. Batch `b` draws from the ChaCha
//! stream `b` of a generator keyed by the run seed, and partial tallies are
//! merged in batch order, so results do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const BATCH_SIZE: u64 = 4096;

/// Accumulator merged across batches.
pub trait Tally: Default + Send {
    fn merge(&mut self, other: Self);
}

/// SplitMix64 finalizer, used to derive independent seeds from labels.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix64(master), |acc, &l| mix64(acc ^ mix64(l)))
}

/// Generator for batch `batch` of a run keyed by `seed`.
pub fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Runs `trials` calls of `trial`, each fed the batch generator and the batch tally.
pub fn run_batched<T, F>(trials: u64, seed: u64, parallelism: usize, trial: F) -> T
where
    T: Tally,
    F: Fn(&mut ChaCha8Rng, &mut T) + Sync,
{
    let batches = trials.div_ceil(BATCH_SIZE);
    let work = |b: u64| {
        let mut rng = batch_rng(seed, b);
        let mut tally = T::default();
        let len = BATCH_SIZE.min(trials - b * BATCH_SIZE);
        for _ in 0..len {
            trial(&mut rng, &mut tally);
        }
        tally
    };
    let partials: Vec<T> = if parallelism <= 1 || batches <= 1 {
        (0..batches).map(work).collect()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(|| (0..batches).into_par_iter().map(work).collect()),
            Err(_) => (0..batches).map(work).collect(),
        }
    };
    partials.into_iter().fold(T::default(), |mut acc, t| {
        acc.merge(t);
        acc
    })
}
