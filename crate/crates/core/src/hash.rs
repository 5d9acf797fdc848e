//! Stable, seedable 64-bit hashing.
//!
//! Everything that routes data (owner selection, sketch rows, chunk tokens)
//! must hash identically across processes and toolchain versions, so the
//! std `DefaultHasher` is not an option here.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over `bytes` with the seed folded into the offset basis, then
/// passed through the splitmix64 finalizer for avalanche.
pub fn hash_bytes(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = StreamHasher::new(seed);
    h.update(bytes);
    h.finish()
}

/// Incremental form of [`hash_bytes`]: feeding the same bytes in any
/// number of pieces gives the same result.
#[derive(Debug, Clone)]
pub struct StreamHasher {
    h: u64,
    len: u64,
}

impl StreamHasher {
    pub fn new(seed: u64) -> Self {
        Self {
            h: FNV_OFFSET ^ mix64(seed),
            len: 0,
        }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.h ^= u64::from(b);
            self.h = self.h.wrapping_mul(FNV_PRIME);
        }
        self.len += bytes.len() as u64;
    }

    pub fn finish(&self) -> u64 {
        mix64(self.h ^ self.len)
    }
}

pub fn hash_str(seed: u64, s: &str) -> u64 {
    hash_bytes(seed, s.as_bytes())
}

/// Hash of a pair of words, used for `(digest, offset)` style identifiers.
pub fn hash_pair(a: u64, b: u64) -> u64 {
    mix64(a ^ mix64(b.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Owner of `key` among `n` workers.
pub fn owner_index(key: &str, n: usize) -> usize {
    assert!(n > 0, "owner_index over an empty worker set");
    (hash_str(0, key) % n as u64) as usize
}
