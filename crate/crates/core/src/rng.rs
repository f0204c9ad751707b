//! Deterministic RNG plumbing.
//!
//! Everything stochastic in this crate is driven by ChaCha12 streams derived
//! from a caller-supplied 64-bit seed. Parallel work (batch measurements,
//! sweep grid points, ensemble members) gets one substream per unit of work,
//! so results are independent of thread scheduling and batch chunking.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The crate-wide RNG. Seedable, portable, and fast enough that sampling is
/// never the bottleneck next to the transfer-matrix products.
pub type Rng = ChaCha12Rng;

/// Root generator for a seed.
pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator for `seed`.
///
/// Substreams with distinct ids never overlap, which is what makes batched
/// and parallel simulation reproducible regardless of execution order.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a tag (splitmix64 finalizer).
/// Used where a distinct 64-bit seed is needed per unit of work, e.g. one
/// per PUF in an ensemble or one per sweep grid point.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
