//! Seed derivation.
//!
//! Every run starts from one explicit seed. Subordinate seeds (subsampling,
//! initialization, shuffling, one per grid cell) are derived from it by
//! hashing a label, so any component can be re-run in isolation.

/// 64-bit FNV-1a. Stable across platforms and compiler versions.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a textual label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    splitmix64(base ^ splitmix64(fnv1a(label.as_bytes())))
}
