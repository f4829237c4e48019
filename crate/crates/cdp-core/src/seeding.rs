//! Deterministic seed derivation and stable content hashing.
//!
//! Every randomized stage owns a PRNG stream derived from a base seed and a
//! stream index, so batches can run in parallel without sharing generator
//! state and reruns are bit-identical.

/// splitmix64 finalizer. Fixed constants from the reference implementation.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent child seed from `(base, stream)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    mix64(base ^ mix64(stream))
}

/// Derive a child seed from a tagged stream, e.g. one tag per pipeline stage
/// and one index per item.
pub fn derive_seed_tagged(base: u64, tag: u64, index: u64) -> u64 {
    derive_seed(derive_seed(base, tag), index)
}

/// FNV-1a over a byte slice. Used for stable content hashes in manifests,
/// lineage tags and codebook provenance (not for security).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Incremental FNV-1a hasher for composite values.
#[derive(Debug, Clone)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    pub fn update_u64(&mut self, v: u64) {
        self.update(&v.to_le_bytes());
    }

    pub fn update_f64(&mut self, v: f64) {
        self.update(&v.to_bits().to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_spreads() {
        assert_eq!(derive_seed(7, 0), derive_seed(7, 0));
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
        // tagged streams with equal (tag ^ index) combinations must not collide
        assert_ne!(derive_seed_tagged(7, 1, 2), derive_seed_tagged(7, 2, 1));
    }

    #[test]
    fn fnv_matches_known_vector() {
        // FNV-1a("a") reference value
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        let mut h = Fnv1a::new();
        h.update(b"a");
        assert_eq!(h.finish(), fnv1a64(b"a"));
    }
}
