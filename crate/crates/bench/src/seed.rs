//! Reproducible per-chain seeds.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the chain for one (grid point, sampler, replicate) cell.
///
/// Each input is absorbed in turn through the SplitMix64 finaliser, so the
/// result depends on every bit of every input and on their order. The mix
/// uses only integer arithmetic and is identical on every platform.
pub fn derive_seed(base: u64, grid: u64, sampler: u64, replicate: u64) -> u64 {
    let mut h = mix64(base ^ GOLDEN);
    for (k, x) in [grid, sampler, replicate].into_iter().enumerate() {
        h = mix64(h ^ x.wrapping_add(GOLDEN.wrapping_mul(k as u64 + 2)));
    }
    h
}

/// Seed for drawing the random couplings shared by every run of a
/// benchmark.
pub fn weights_seed(base: u64) -> u64 {
    derive_seed(base, u64::MAX, u64::MAX, u64::MAX)
}
