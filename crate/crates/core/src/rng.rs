//! Keyed random substreams.
//!
//! Every random quantity in a simulation is drawn from a [`StreamKey`]. A key
//! is a master seed plus a derivation path; [`StreamKey::child`] derives an
//! independent key for a sub-task (a trial, a chunk of rounds, a protocol
//! phase). Because a sub-task's stream depends only on its key and never on
//! when or where it runs, parallel and sequential execution produce identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of rounds simulated per keyed substream in batched campaigns.
pub const CHUNK_ROUNDS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey { seed, path: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives the key of the `index`-th sub-task below this one.
    pub fn child(&self, index: u64) -> Self {
        StreamKey {
            seed: self.seed,
            path: splitmix64(self.path ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        }
    }

    /// Opens the generator for this key. Opening the same key twice yields
    /// the same sequence.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.path.to_le_bytes());
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `total` rounds into `(chunk index, rounds in chunk)` pairs of at
/// most [`CHUNK_ROUNDS`] each.
pub(crate) fn chunks(total: usize) -> impl Iterator<Item = (u64, usize)> + Clone {
    let count = total.div_ceil(CHUNK_ROUNDS);
    (0..count).map(move |c| {
        let start = c * CHUNK_ROUNDS;
        (c as u64, CHUNK_ROUNDS.min(total - start))
    })
}
