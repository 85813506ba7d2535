//! Reproducible random streams.
//!
//! Every stream is a ChaCha20 generator keyed by the run seed. Independent
//! streams are obtained by selecting the ChaCha stream id, so two streams
//! with the same key never overlap. Stream ids are laid out as:
//!
//! | purpose                        | stream id                          |
//! |--------------------------------|------------------------------------|
//! | MCMC chain `c`                 | `c`                                |
//! | replication `r` (simulation)   | `2^62 + r`                         |
//! | poststratification, chain `c`, kept draw `k` | `2^63 + c * 2^32 + k` |

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

const REPLICATION_BASE: u64 = 1 << 62;
const POSTSTRAT_BASE: u64 = 1 << 63;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn chain_rng(seed: u64, chain: usize) -> StreamRng {
    stream_rng(seed, chain as u64)
}

pub fn replication_rng(seed: u64, replication: usize) -> StreamRng {
    stream_rng(seed, REPLICATION_BASE + replication as u64)
}

/// Stream for the unsampled-tract effects drawn while poststratifying kept
/// draw `draw` of chain `chain`.
pub fn poststrat_rng(seed: u64, chain: usize, draw: usize) -> StreamRng {
    debug_assert!(draw < (1 << 32) && chain < (1 << 30));
    stream_rng(seed, POSTSTRAT_BASE + ((chain as u64) << 32) + draw as u64)
}
