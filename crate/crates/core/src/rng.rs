//! Seed derivation and named RNG streams.
//!
//! A single master seed expands into independent ChaCha8 streams, one per
//! purpose. Streams are keyed by name and position, never by time or thread,
//! so adding parallelism elsewhere cannot change what any stream produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose of a random stream. The discriminant is part of the seed
/// derivation and must never be renumbered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    WeightInit = 1,
    DataOrder = 2,
    PopulationInit = 3,
    Selection = 4,
    Crossover = 5,
    Mutation = 6,
    Dataset = 7,
    Split = 8,
    Pairing = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a path of integers into a new seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, which: Stream) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[which as u64]))
}

/// The four streams one genetic-algorithm run consumes.
#[derive(Clone, Debug)]
pub struct GaStreams {
    pub init: StreamRng,
    pub selection: StreamRng,
    pub crossover: StreamRng,
    pub mutation: StreamRng,
}

impl GaStreams {
    pub fn from_seed(seed: u64) -> Self {
        GaStreams {
            init: stream(seed, Stream::PopulationInit),
            selection: stream(seed, Stream::Selection),
            crossover: stream(seed, Stream::Crossover),
            mutation: stream(seed, Stream::Mutation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = stream(42, Stream::Selection)
            .random_iter()
            .take(8)
            .collect();
        let b: Vec<u64> = stream(42, Stream::Selection)
            .random_iter()
            .take(8)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_are_distinct() {
        let a: u64 = stream(42, Stream::Selection).random();
        let b: u64 = stream(42, Stream::Crossover).random();
        let c: u64 = stream(43, Stream::Selection).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derive_depends_on_order() {
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(7, &[1, 0]));
    }
}
