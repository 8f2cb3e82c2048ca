//! Deterministic seed derivation.
//!
//! A single experiment seed fans out into independent per-stage (and
//! per-utterance) seeds via a fixed FNV-1a hash, so any stage can be rerun
//! in isolation and still draw the same random stream.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive the seed for a named stage from the experiment seed.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let h = fnv1a(FNV_OFFSET, &root.to_le_bytes());
    fnv1a(h, stage.as_bytes())
}

/// Derive a per-item substream seed, e.g. one per synthesized utterance.
pub fn substream_seed(root: u64, parts: &[&str]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &root.to_le_bytes());
    for p in parts {
        h = fnv1a(h, p.as_bytes());
        h = fnv1a(h, b"/");
    }
    h
}
