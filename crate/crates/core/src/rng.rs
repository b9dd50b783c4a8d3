//! Reproducible random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for task `stream` under the run seed.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a two-level task label into one stream id.
pub fn stream_id(major: u32, minor: u32) -> u64 {
    ((major as u64) << 32) | minor as u64
}

/// Seed for one stage of a run, so stages never share a stream.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs `f` inside a rayon pool with exactly `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool construction");
    pool.install(f)
}
