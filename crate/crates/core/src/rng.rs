//! Counter-keyed random substreams.
//!
//! Every random draw in the pipeline comes from a stream keyed by
//! `(seed, domain, a, b)`, so results do not depend on execution order or
//! on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream domains. Distinct domains never share keys.
pub mod domain {
    pub const WORLD_SUBJECT: u64 = 1;
    pub const WORLD_IMAGE: u64 = 2;
    pub const WORLD_OVERLAY: u64 = 3;
    pub const TRAIN_BATCH: u64 = 4;
    pub const TRAIN_INIT: u64 = 5;
    pub const REFERENCE: u64 = 6;
    pub const CLASS_STYLE: u64 = 7;
    pub const IMAGE_STYLE: u64 = 8;
    pub const GENERATE: u64 = 9;
    pub const BASIS: u64 = 10;
    pub const WORLD_PRIOR: u64 = 11;
    pub const METRICS: u64 = 12;
    pub const IDENTITY: u64 = 13;
}

/// Key of a substream; recorded in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub domain: u64,
    pub a: u64,
    pub b: u64,
}

impl StreamKey {
    pub fn new(seed: u64, domain: u64, a: u64, b: u64) -> Self {
        Self { seed, domain, a, b }
    }

    pub fn stream(&self) -> Stream {
        let mut bytes = [0u8; 32];
        for (i, word) in [self.seed, self.domain, self.a, self.b].iter().enumerate() {
            bytes[i * 8..(i + 1) * 8].copy_from_slice(&splitmix(*word ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)).to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

pub fn substream(seed: u64, domain: u64, a: u64, b: u64) -> Stream {
    StreamKey::new(seed, domain, a, b).stream()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
