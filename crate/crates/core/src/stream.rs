//! Hierarchical deterministic RNG streams.
//!
//! Every random draw in the crate flows through [`derive_rng`]: a stream is
//! identified by a master seed plus a path of labels, and two distinct paths
//! yield independent streams regardless of the order in which they are used.
//! The construction is fixed: SHA-256 over a domain tag, the little-endian
//! master seed, and a type-tagged, length-prefixed encoding of each path
//! segment; the 32-byte digest seeds a ChaCha8 generator. The encoding is
//! injective, so distinct paths cannot collide short of a SHA-256 collision.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// One segment of a stream path: a string label or a numeric index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seg<'a> {
    Label(&'a str),
    Index(u64),
}

impl<'a> From<&'a str> for Seg<'a> {
    fn from(s: &'a str) -> Self {
        Seg::Label(s)
    }
}

impl From<u64> for Seg<'_> {
    fn from(i: u64) -> Self {
        Seg::Index(i)
    }
}

impl From<u32> for Seg<'_> {
    fn from(i: u32) -> Self {
        Seg::Index(i as u64)
    }
}

impl From<usize> for Seg<'_> {
    fn from(i: usize) -> Self {
        Seg::Index(i as u64)
    }
}

/// Derive the RNG stream identified by `(master_seed, path)`.
pub fn derive_rng(master_seed: u64, path: &[Seg]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"alsim.stream.v1");
    hasher.update(master_seed.to_le_bytes());
    for seg in path {
        match seg {
            Seg::Label(s) => {
                hasher.update([0u8]);
                hasher.update((s.len() as u64).to_le_bytes());
                hasher.update(s.as_bytes());
            }
            Seg::Index(i) => {
                hasher.update([1u8]);
                hasher.update(i.to_le_bytes());
            }
        }
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(seed)
}

/// Derive a fresh 64-bit sub-seed for code that takes a plain `u64` seed.
pub fn derive_seed(master_seed: u64, path: &[Seg]) -> u64 {
    use rand_chacha::rand_core::RngCore;
    derive_rng(master_seed, path).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::RngCore;

    #[test]
    fn same_path_same_stream() {
        let mut a = derive_rng(7, &["arm".into(), "uss".into(), 2u64.into()]);
        let mut b = derive_rng(7, &["arm".into(), "uss".into(), 2u64.into()]);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn sibling_paths_differ() {
        let mut a = derive_rng(7, &["mc".into(), 0u64.into()]);
        let mut b = derive_rng(7, &["mc".into(), 1u64.into()]);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn label_and_index_segments_are_distinct() {
        // "2" as a string must not collide with 2 as an index.
        let mut a = derive_rng(0, &["2".into()]);
        let mut b = derive_rng(0, &[2u64.into()]);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn million_sibling_streams_have_distinct_first_words() {
        let mut seen = std::collections::HashSet::with_capacity(1 << 20);
        for i in 0..1_000_000u64 {
            let mut rng = derive_rng(42, &["sibling".into(), i.into()]);
            assert!(seen.insert(rng.next_u64()), "collision at sibling {i}");
        }
    }

    #[test]
    fn stream_is_independent_of_call_order() {
        let mut first = derive_rng(3, &["a".into()]);
        let expected = first.next_u64();
        // Interleave other derivations; the stream for "a" must not change.
        let _ = derive_rng(3, &["b".into()]).next_u64();
        let _ = derive_rng(3, &["c".into(), 9u64.into()]).next_u64();
        let mut again = derive_rng(3, &["a".into()]);
        assert_eq!(again.next_u64(), expected);
    }
}
