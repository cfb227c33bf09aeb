//! Reproducible random substreams.
//!
//! Every (episode, sensor, stream kind) triple gets its own ChaCha stream
//! under the same root key, so episodes can run on any worker in any order
//! and still see identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which exogenous process a substream drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Request = 0,
    Energy = 1,
    Channel = 2,
    /// Randomized policy decisions (random-CN scheduling).
    Policy = 3,
    /// Anything else a caller needs (e.g. threshold search).
    Aux = 4,
}

const SENSOR_BITS: u32 = 29;

/// A seeded generator for one substream.
pub fn substream(root_seed: u64, episode: u64, sensor: usize, kind: StreamKind) -> ChaCha8Rng {
    assert!(episode < (1 << 32), "episode index out of range");
    assert!((sensor as u64) < (1 << SENSOR_BITS), "sensor index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream((episode << 32) | ((sensor as u64) << 3) | kind as u64);
    rng
}
