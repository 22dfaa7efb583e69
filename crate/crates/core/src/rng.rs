//! Counter-based random streams.
//!
//! Every replication of an experiment draws from its own ChaCha8 stream,
//! addressed by `(master_seed, stream_index)`. The stream content depends on
//! nothing else, so a parallel run with any number of workers reproduces the
//! sequential result exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngHandle {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngHandle {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// Handle for another stream under the same master seed.
    pub fn with_stream(self, stream_index: u64) -> Self {
        Self {
            stream_index,
            ..self
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn stream(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}
