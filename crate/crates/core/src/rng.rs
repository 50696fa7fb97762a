use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for one independent stream under a base seed.
///
/// Streams let per-tree, per-repetition and per-network randomness stay
/// reproducible regardless of construction order or thread scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
