//! Seeded random sources.
//!
//! Every run draws from a ChaCha8 generator. The generator is seeded from a
//! 64-bit base seed and each replication gets its own stream via
//! [`ChaCha8Rng::set_stream`], so replications are independent of each other
//! and of the order in which a worker pool executes them. ChaCha output is
//! specified bit-for-bit, which keeps experiments reproducible across machines.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// The generator type used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Generator for a single seed, stream 0.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child stream `replication` of `base_seed`.
pub fn replication_rng(base_seed: u64, replication: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replication);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    const PINNED: u64 = 13_080_132_717_333_068_652;
    use rand::Rng;

    fn draws(mut rng: SimRng) -> Vec<u64> {
        (0..8).map(|_| rng.gen()).collect()
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        assert_eq!(draws(replication_rng(7, 0)), draws(replication_rng(7, 0)));
        assert_ne!(draws(replication_rng(7, 0)), draws(replication_rng(7, 1)));
        assert_ne!(draws(replication_rng(7, 0)), draws(replication_rng(8, 0)));
    }

    #[test]
    fn pinned_first_draw() {
        // guards against an accidental generator or seeding change
        assert_eq!(seeded(0).gen::<u64>(), PINNED);
    }
}
