//! Seeded RNG substreams.
//!
//! Every unit of parallel work gets its own ChaCha8 stream keyed by the master
//! seed, a purpose label, and a per-item key, so results never depend on how
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::vocab::TokenId;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(master, label, key)`.
pub fn substream(master: u64, label: &str, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ fnv1a64(label.as_bytes())));
    rng.set_stream(key);
    rng
}

/// Key for an item identified by its token content and its occurrence rank
/// among identical items; invariant under reordering of the item list.
pub fn content_key(tokens: &[TokenId], occurrence: usize) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &t in tokens {
        for b in t.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    splitmix64(h ^ splitmix64(occurrence as u64))
}

/// Canonical processing order for a list of token sequences: sorted by
/// content, duplicates in original order. Returns `(original index, key)`.
pub fn canonical_order<S: AsRef<[TokenId]>>(items: &[S]) -> Vec<(usize, u64)> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| items[a].as_ref().cmp(items[b].as_ref()).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(idx.len());
    let mut occurrence = 0;
    for (pos, &i) in idx.iter().enumerate() {
        if pos > 0 && items[idx[pos - 1]].as_ref() == items[i].as_ref() {
            occurrence += 1;
        } else {
            occurrence = 0;
        }
        out.push((i, content_key(items[i].as_ref(), occurrence)));
    }
    out
}
