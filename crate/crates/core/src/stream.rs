//! Counter-based random streams.
//!
//! Every draw is produced by a generator keyed on `(seed, domain, a, b)`, so
//! any evaluation order — sequential, work-stealing, or re-run — sees the
//! same randomness. Distinct keys give statistically independent streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain separators so the same indices never collide across uses.
pub(crate) mod domain {
    pub const OFFSET_SAMPLES: u64 = 0x01;
    pub const INTERFERENCE_FADING: u64 = 0x02;
    pub const COVERAGE_FADING: u64 = 0x03;
    pub const COVERAGE_INNER: u64 = 0x04;
}

/// Stateless stream lookup: the full 256-bit ChaCha key is the counter.
pub(crate) fn stream(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_keys_replay_identical_streams() {
        let a: Vec<f64> = stream(7, 1, 2, 3)
            .sample_iter(rand::distributions::Standard)
            .take(16)
            .collect();
        let b: Vec<f64> = stream(7, 1, 2, 3)
            .sample_iter(rand::distributions::Standard)
            .take(16)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_keys_diverge() {
        let base: f64 = stream(7, 1, 2, 3).gen();
        assert_ne!(base, stream(8, 1, 2, 3).gen::<f64>());
        assert_ne!(base, stream(7, 2, 2, 3).gen::<f64>());
        assert_ne!(base, stream(7, 1, 3, 3).gen::<f64>());
        assert_ne!(base, stream(7, 1, 2, 4).gen::<f64>());
    }
}
