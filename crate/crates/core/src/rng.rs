//! Named, counter-addressed random streams.
//!
//! Every stochastic step draws from `stream(seed, label, index)`. The key is
//! derived from the top-level seed and the label; the ChaCha stream id is the
//! index. A replicate's draws therefore depend only on its own index, never on
//! which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to turn stream labels into key material.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ label_hash(label)));
    rng.set_stream(index);
    rng
}

/// Derive a child seed, for handing a sub-seed to a nested component.
pub fn child_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix(splitmix(seed ^ label_hash(label)).wrapping_add(index))
}
