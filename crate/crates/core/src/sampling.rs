//! Seeded, worker-count independent Monte Carlo plumbing.
//!
//! Work is cut into a fixed number of batches. Batch `i` draws from a
//! `ChaCha8Rng` seeded with the run seed on stream `i`, so the result depends
//! only on `(seed, samples)` and never on how rayon schedules the batches.
//! Error bars are batch means: the standard deviation of the per-batch
//! estimates divided by `sqrt(batches)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Batches used for batch-means error bars.
pub const BATCHES: usize = 100;

/// Point estimate with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Whether `target` lies within `k` standard errors.
    pub fn within_sigma(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Batch-means estimate from equally weighted per-batch values.
pub fn batch_means(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Estimate {
            mean,
            stderr: f64::NAN,
        };
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Estimate {
        mean,
        stderr: (var / n).sqrt(),
    }
}

/// Sizes of `batches` near-equal chunks of `samples`; the first chunks take the remainder.
pub fn split_samples(samples: u64, batches: usize) -> Vec<u64> {
    let base = samples / batches as u64;
    let extra = (samples % batches as u64) as usize;
    (0..batches).map(|i| base + u64::from(i < extra)).collect()
}

/// RNG for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `work(batch_index, batch_samples, rng)` for every batch in parallel and
/// returns the results in batch order.
pub fn run_batches<T, F>(seed: u64, samples: u64, batches: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64, &mut ChaCha8Rng) -> T + Sync,
{
    let sizes = split_samples(samples, batches);
    sizes
        .into_par_iter()
        .enumerate()
        .map(|(i, n)| {
            let mut rng = stream_rng(seed, i as u64);
            work(i, n, &mut rng)
        })
        .collect()
}

/// Uniform point on the unit sphere (Archimedes: `z` uniform on `[-1, 1]`).
#[inline]
pub fn uniform_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    let (s, c) = phi.sin_cos();
    [r * c, r * s, z]
}
