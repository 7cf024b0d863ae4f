//! Small deterministic mixing hash for per-pixel seeded noise and colors.

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of an absolute pixel position under a seed. The same pixel
/// hashes identically no matter which window requests it.
pub(crate) fn pixel_hash(seed: u64, row: usize, col: usize) -> u64 {
    let key = ((row as u64) << 32) ^ (col as u64);
    splitmix64(splitmix64(seed) ^ key)
}

/// Uniform f64 in [0, 1) from the top 53 bits.
pub(crate) fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}
