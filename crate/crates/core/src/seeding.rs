//! Named random sub-streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const INIT: &str = "init";
pub const SGD_SAMPLES: &str = "sgd-samples";
pub const SWEEP: &str = "sweep";
pub const ENSEMBLE: &str = "ensemble";
pub const PATHS: &str = "paths";

/// Seed for stream `name` under `master`.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Generator for sub-stream `index` of the named stream.
pub fn stream_rng(master: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, name));
    rng.set_stream(index);
    rng
}
