//! Named sub-seed derivation.
//!
//! Every random choice in the pipeline flows from one global seed through
//! a named child seed, so that independent components (stimulus noise,
//! split assignment, weight initialization) stay decoupled while the whole
//! experiment remains reproducible from a single number. Derivation is a
//! plain FNV-1a mix and therefore identical on every platform.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Derive a child seed from `global` and a path of name components.
///
/// `child_seed(s, &["split", "prbs"])` and `child_seed(s, &["split", "sine"])`
/// are unrelated streams; the same arguments always return the same seed.
pub fn child_seed(global: u64, names: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for byte in global.to_le_bytes() {
        h ^= u64::from(byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    for name in names {
        // 0xff separates components so ["ab"] != ["a", "b"].
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
        for byte in name.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}
