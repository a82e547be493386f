use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `(a, b)` under `master`.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(master) ^ a) ^ b.rotate_left(32))
}

/// Mean accumulated incrementally, so that identical inputs yield exactly
/// that input back.
pub fn stable_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut mean = 0.0;
    let mut n = 0usize;
    for v in values {
        n += 1;
        mean += (v - mean) / n as f64;
    }
    (n > 0).then_some(mean)
}
