//! Seeded, derivable random streams.
//!
//! Every random quantity in the crate is drawn from a [`Stream`]: a ChaCha8
//! keystream keyed by the master seed, with a 64-bit stream id selecting one of
//! 2^64 independent keystreams. ChaCha is counter-based, so the `k`-th word of a
//! stream is a pure function of `(key, stream id, k)`.
//!
//! Child streams are derived by mixing the parent's stream id with a label
//! (setting id, batch index, grid point, ...) through splitmix64. Derivation
//! never advances the parent. A value is therefore determined by the master
//! seed, the label path and its position in the stream, and never by thread
//! scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Labels used for the fixed top-level sub-streams.
pub mod labels {
    pub const SETTINGS: u64 = 0x5e77_1265;
    pub const MONTE_CARLO: u64 = 0x3c_3c3c;
    pub const PROTOCOL: u64 = 0x9807_0c01;
    pub const SUBSAMPLE: u64 = 0x5ab5_a3b1;
    pub const SWEEP: u64 = 0x5ee9;
}

/// Number of Monte Carlo samples evaluated per derived batch stream.
pub const BATCH_SIZE: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct Stream {
    seed: u64,
    id: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    /// Root stream (id 0) for a master seed.
    pub fn new(seed: u64) -> Self {
        Self::with_id(seed, 0)
    }

    fn with_id(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Stream { seed, id, rng }
    }

    /// Child stream for `label`, starting at the beginning of its keystream.
    pub fn derive(&self, label: u64) -> Stream {
        let id = splitmix64(self.id ^ splitmix64(label.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        Self::with_id(self.seed, id)
    }

    pub fn derive_path(&self, path: &[u64]) -> Stream {
        path.iter().fold(self.clone_fresh(), |s, &l| s.derive(l))
    }

    /// The same stream rewound to its first draw.
    pub fn clone_fresh(&self) -> Stream {
        Self::with_id(self.seed, self.id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> u64 {
        self.id
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `n` draws into fixed-size batches, runs each on its own derived
/// stream (possibly in parallel) and returns the per-batch results in batch
/// order. The partition depends only on `n` and [`BATCH_SIZE`].
pub fn par_batches<T, F>(stream: &Stream, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Stream, usize) -> T + Sync,
{
    let n_batches = n.div_ceil(BATCH_SIZE);
    (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let len = BATCH_SIZE.min(n - b * BATCH_SIZE);
            let mut s = stream.derive(b as u64);
            f(&mut s, len)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_is_identical() {
        let mut a = Stream::new(7).derive(3);
        let mut b = Stream::new(7).derive(3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derive_does_not_advance_parent() {
        let mut parent = Stream::new(11);
        let _ = parent.derive(1);
        let mut fresh = Stream::new(11);
        assert_eq!(parent.next_u64(), fresh.next_u64());
    }

    #[test]
    fn siblings_differ() {
        let root = Stream::new(1);
        let mut a = root.derive(0);
        let mut b = root.derive(1);
        assert_ne!(a.next_u64(), b.next_u64());
        let mut c = Stream::new(2).derive(0);
        let mut a = root.derive(0);
        assert_ne!(a.next_u64(), c.next_u64());
    }

    #[test]
    fn batches_independent_of_thread_count() {
        let s = Stream::new(5);
        let run = || par_batches(&s, 3 * BATCH_SIZE + 17, |r, len| (0..len).map(|_| r.next_u32() as u64).sum::<u64>());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
        assert_eq!(one, four);
        assert_eq!(one.len(), 4);
    }
}
