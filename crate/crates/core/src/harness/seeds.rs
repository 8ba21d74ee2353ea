/// 64-bit finalizer of SplitMix64.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the stream addressed by `indices` under `master`.
pub fn derive_seed(master: u64, indices: &[u64]) -> u64 {
    let mut h = mix64(master ^ 0x9e37_79b9_7f4a_7c15);
    for (pos, idx) in indices.iter().enumerate() {
        h = mix64(h ^ mix64(idx.wrapping_add((pos as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))));
    }
    h
}
