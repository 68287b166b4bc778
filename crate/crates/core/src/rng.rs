//! Keyed random streams.
//!
//! Environment draws are counter-based: the word used by site `i` is a pure
//! function of `(seed, domain, i)`, read from a ChaCha8 keystream positioned
//! by word offset. Nonnegative sites live on one stream, negative sites on a
//! mirrored stream, so a contiguous window is a sequential read in either
//! direction.
//!
//! Trajectory randomness uses a separate sequential generator seeded from a
//! derived key, so the same environment can be replayed under many walks.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Domain tags keep the derived streams disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Environment = 0x656e_7669,
    Walk = 0x7761_6c6b,
    Branching = 0x6272_616e,
    Replica = 0x7265_706c,
    EnvironmentSeed = 0x656e_7673,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a master seed together with an ordered list of key parts.
///
/// Changing any part, or their order, gives an unrelated seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(master ^ GOLDEN);
    for (k, &p) in parts.iter().enumerate() {
        h = mix64(h ^ mix64(p.wrapping_add(GOLDEN.wrapping_mul(k as u64 + 1))));
    }
    h
}

/// Sequential generator for trajectories and Monte Carlo replicas.
pub type TrajectoryRng = Xoshiro256PlusPlus;

pub fn trajectory_rng(seed: u64, domain: Domain) -> TrajectoryRng {
    Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, &[domain as u64]))
}

/// Map a 64-bit word to a uniform in [0, 1) with 53 bits of precision.
#[inline]
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-based per-site words.
#[derive(Debug, Clone)]
pub struct SiteStream {
    key: [u8; 32],
}

impl SiteStream {
    pub fn new(seed: u64, domain: Domain) -> Self {
        let mut key = [0u8; 32];
        for (k, chunk) in key.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&derive_seed(seed, &[domain as u64, k as u64]).to_le_bytes());
        }
        Self { key }
    }

    /// Word for a single site.
    pub fn word(&self, site: i64) -> u64 {
        let mut out = [0u64; 1];
        self.fill(site, &mut out);
        out[0]
    }

    /// Fill `out[k]` with the word of site `start + k` (nonnegative sites) or
    /// `start - k` (negative sites). Both halves must not be crossed in one call.
    fn fill_side(&self, negative: bool, offset: u64, out: &mut [u64]) {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(negative as u64);
        rng.set_word_pos(u128::from(offset) * 2);
        for w in out.iter_mut() {
            *w = rng.next_u64();
        }
    }

    /// Words for the contiguous sites `start, start + 1, ..` (`out.len()` of them).
    pub fn fill(&self, start: i64, out: &mut [u64]) {
        let end = start + out.len() as i64;
        if start >= 0 {
            self.fill_side(false, start as u64, out);
            return;
        }
        // negative part: sites start..min(end, 0), stored at offsets |site| - 1 on the mirrored stream
        let neg_end = end.min(0);
        let neg_len = (neg_end - start) as usize;
        let mut neg = vec![0u64; neg_len];
        self.fill_side(true, (-neg_end) as u64, &mut neg);
        // neg[k] is site neg_end - 1 - k
        for (k, w) in neg.into_iter().enumerate() {
            out[neg_len - 1 - k] = w;
        }
        if end > 0 {
            self.fill_side(false, 0, &mut out[neg_len..]);
        }
    }
}
