//! Counter-style seeding for sharded Monte Carlo work.
//!
//! Work is split into fixed-size shards and shard `k` draws from ChaCha8
//! stream `k` of the run seed, so results depend only on the seed and the
//! shard size, never on how many threads execute the shards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for shard `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Split `total` items into `(shard_index, start, len)` chunks of `shard_size`.
pub fn shards(total: usize, shard_size: usize) -> impl Iterator<Item = (u64, usize, usize)> {
    let shard_size = shard_size.max(1);
    (0..total.div_ceil(shard_size)).map(move |k| {
        let start = k * shard_size;
        (k as u64, start, shard_size.min(total - start))
    })
}
