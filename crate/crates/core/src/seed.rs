//! Seed-substream derivation so a single master seed drives every RNG
//! consumer (splitting, initialization, shuffling, dropout, synthesis).

/// Derives a child seed from `master` for the named substream.
///
/// Mixes an FNV-1a hash of the name into the master seed through a
/// splitmix64 finalizer. The mapping is fixed: the same (master, name)
/// pair always yields the same child seed, on every platform.
pub fn substream(master: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in name.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
