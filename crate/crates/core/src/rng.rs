use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for the `stream`-th independent task derived from `seed`.
///
/// Parallel work (restarts, grid points, replicates) draws from its own stream
/// so results do not depend on scheduling.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
