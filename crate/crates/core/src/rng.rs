//! Seeded stream derivation. Every (episode seed, subsystem, a, b) tuple maps to an
//! independent ChaCha stream, so results never depend on call order or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Subsystem {
    Init = 1,
    Sensing = 2,
    Behavior = 3,
    Markov = 4,
    MarkovFuture = 5,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn stream(seed: u64, sub: Subsystem, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [
        splitmix(seed),
        splitmix(seed ^ splitmix(sub as u64)),
        splitmix(a.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ sub as u64),
        splitmix(b ^ splitmix(a ^ seed)),
    ];
    for (i, w) in words.iter().enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
