//! Seeded random streams.
//!
//! Every independent part of the simulation (a station, a session, a
//! planned event, a bot) draws from its own stream derived from the run
//! seed and a path of integers. Changing one part of a scenario therefore
//! does not shift the random draws of any other part.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, path: &[u64]) -> SimRng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Stream tags, so paths of different kinds never collide.
pub mod tag {
    pub const STATION: u64 = 1;
    pub const SESSION: u64 = 2;
    pub const EVENT: u64 = 3;
    pub const BOT: u64 = 4;
    pub const TAMPER: u64 = 5;
    pub const TAGS: u64 = 6;
}

/// Exponential inter-arrival time for a Poisson process of `rate` per
/// second; infinite when the rate is zero.
pub fn exp_interval(rng: &mut SimRng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -u.ln() / rate
}

pub fn hex_string(rng: &mut SimRng, len: usize) -> String {
    const HEX: &[u8] = b"0123456789ABCDEF";
    (0..len).map(|_| HEX[rng.gen_range(0..16)] as char).collect()
}

/// Rounds to one decimal place.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}
