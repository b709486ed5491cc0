//! Seed plumbing. All randomness in the artifact flows from one `u64` seed
//! through named sub-streams so that toggling one feature (augmentation,
//! jitter, dataset size) never reshuffles the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Named randomness consumers. Each gets its own ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Trajectory poses and expression walks during dataset minting.
    Dataset,
    /// Parameter initialization; the index selects the array.
    Init(u64),
    /// Per-iteration plan draws (frame, crop, patch, quadrant).
    Plan,
    /// Per-iteration jitter seed material.
    Jitter,
    /// Scratch streams for tests and probes.
    Probe(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Dataset => 1 << 48,
            Stream::Init(i) => (2 << 48) | i,
            Stream::Plan => 3 << 48,
            Stream::Jitter => 4 << 48,
            Stream::Probe(i) => (5 << 48) | i,
        }
    }
}

/// Deterministic RNG for a named sub-stream of `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Counter-based mixer (splitmix64 finalizer). Used for per-ray stratified
/// jitter where creating a full RNG per ray would dominate the render cost;
/// the output depends only on the inputs, never on scheduling.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) from a counter key.
#[inline]
pub fn unit_uniform(key: u64) -> f64 {
    // 53 mantissa bits.
    (mix64(key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Key for the jitter of one sample of one ray of one map render. The map
/// seed itself is derived per (iteration, map index) by the training loop.
#[inline]
pub fn jitter_key(map_seed: u64, ray_index: u64, sample: u64) -> u64 {
    // Distinct multipliers keep the axes from aliasing under wrapping adds.
    map_seed
        .wrapping_add(ray_index.wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
        .wrapping_add(sample.wrapping_mul(0x1656_67b1_9e37_79f9))
}
