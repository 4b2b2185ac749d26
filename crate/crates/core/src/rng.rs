//! Named, step-indexed random streams.
//!
//! Every consumer derives its generator from `(root seed, stream name,
//! index)`, so adding a consumer never perturbs another one and a resumed
//! run draws exactly what an uninterrupted run would have drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const INIT: &str = "init";
pub const BATCH: &str = "batch";
pub const CVAE_NOISE: &str = "cvae-noise";
pub const ENC_NOISE: &str = "enc-noise";
pub const EVAL: &str = "eval";
pub const COLLECT: &str = "collect";

/// FNV-1a, stable across platforms and toolchains.
fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(root: u64, name: &str, index: u64) -> Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&root.to_le_bytes());
    seed[8..16].copy_from_slice(&stream_id(name).to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    seed[24..].copy_from_slice(b"LSPC-RNG");
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, BATCH, 3).random();
        let b: u64 = stream(7, BATCH, 3).random();
        let c: u64 = stream(7, BATCH, 4).random();
        let d: u64 = stream(7, INIT, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
