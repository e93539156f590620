//! Deterministic derivation of independent random streams.
//!
//! Every Monte Carlo routine in this crate takes a [`SeedSpec`] and derives
//! one ChaCha stream per `(kind, index)` pair with a counter-based SplitMix64
//! chain. Two consequences:
//!
//! - identical master seeds give bit-identical results at any worker count,
//!   because each replicate owns its stream instead of pulling from a shared
//!   generator;
//! - distinct `(kind, index)` pairs give statistically independent streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// What a derived stream is used for. The discriminant enters the seed
/// derivation, so streams of different kinds never collide even at equal
/// indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Integration points x.
    XDraw,
    /// Partitions for single-tree (finite-forest) estimates.
    TreePartition,
    /// Partitions for infinite-forest estimates.
    InfPartition,
    /// Learning samples.
    Data,
    /// Hold-out sample used to build data-dependent partitions.
    HoldoutData,
    /// Test points for risk / estimation-error evaluation.
    TestX,
    /// Partitions used by the kernel estimator.
    Kernel,
    /// Forests drawn for direct forest-size simulation.
    ForestReplicate,
    /// Anything test-local.
    Misc,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::XDraw => 1,
            StreamKind::TreePartition => 2,
            StreamKind::InfPartition => 3,
            StreamKind::Data => 4,
            StreamKind::HoldoutData => 5,
            StreamKind::TestX => 6,
            StreamKind::Kernel => 7,
            StreamKind::ForestReplicate => 8,
            StreamKind::Misc => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    /// Derive the stream for `(kind, index)`.
    pub fn stream(&self, kind: StreamKind, index: u64) -> ChaCha12Rng {
        let mut state = splitmix64(self.master_seed ^ 0x9e37_79b9_7f4a_7c15);
        state = splitmix64(state ^ kind.tag());
        state = splitmix64(state ^ index.wrapping_mul(0xff51_afd7_ed55_8ccd));
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let spec = SeedSpec::new(42);
        let a: Vec<f64> = spec
            .stream(StreamKind::XDraw, 3)
            .sample_iter(rand::distr::StandardUniform)
            .take(8)
            .collect();
        let b: Vec<f64> = spec
            .stream(StreamKind::XDraw, 3)
            .sample_iter(rand::distr::StandardUniform)
            .take(8)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_pairs_give_distinct_streams() {
        let spec = SeedSpec::new(7);
        let mut firsts = std::collections::HashSet::new();
        for kind in [
            StreamKind::XDraw,
            StreamKind::TreePartition,
            StreamKind::InfPartition,
            StreamKind::Data,
        ] {
            for idx in 0..64 {
                let v: u64 = spec.stream(kind, idx).random();
                assert!(firsts.insert(v), "stream collision at {kind:?}/{idx}");
            }
        }
    }

    /// Pairwise-independence smoke test: empirical correlation between
    /// uniforms from neighbouring streams stays at the 1/sqrt(n) scale.
    #[test]
    fn neighbouring_streams_uncorrelated() {
        let spec = SeedSpec::new(2024);
        let n = 20_000;
        let mut r0 = spec.stream(StreamKind::TreePartition, 0);
        let mut r1 = spec.stream(StreamKind::TreePartition, 1);
        let mut sum = 0.0;
        for _ in 0..n {
            let a: f64 = r0.random::<f64>() - 0.5;
            let b: f64 = r1.random::<f64>() - 0.5;
            sum += a * b;
        }
        // Var(ab) = 1/144, so SE of the mean is (1/12)/sqrt(n).
        let corr = sum / n as f64;
        assert!(corr.abs() < 5.0 / 12.0 / (n as f64).sqrt());
    }
}
