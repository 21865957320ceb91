//! Hierarchical seed derivation.
//!
//! A child seed is the first word of a ChaCha8 stream keyed by the parent seed
//! and selected by a stream number, so children of one parent never share a
//! stream and adding a sibling leaves the others untouched.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags used across the crate and by the experiment driver.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const GRID: u64 = 2 << 32;
    pub const FOLD: u64 = 3 << 32;
    pub const ARCH: u64 = 4 << 32;
    pub const SUBJECT_ORDER: u64 = 5 << 32;
}

pub fn derive(parent: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(parent);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Generator for a seed. All randomness in the crate goes through this.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_are_distinct_and_stable() {
        let a = derive(7, stream::FOLD);
        let b = derive(7, stream::FOLD + 1);
        assert_ne!(a, b);
        assert_eq!(a, derive(7, stream::FOLD));
        assert_ne!(derive(8, stream::FOLD), a);
    }
}
