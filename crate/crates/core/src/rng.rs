//! Counter-based random sub-streams.
//!
//! Every random draw in the toolkit comes from a stream keyed by
//! `(master seed, purpose, a, b)`. Streams for different agents or years are
//! independent of each other, so adding agents or reordering work never
//! perturbs the draws of existing agents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags separating the sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    World = 1,
    Industry = 2,
    Agents = 3,
    Taste = 4,
    Choice = 5,
    Network = 6,
    Weather = 7,
    ChoiceSet = 8,
    Survey = 9,
    EquilibriumShock = 10,
    Permutation = 11,
    Event = 12,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the 64-bit key of a sub-stream.
pub fn stream_key(master: u64, purpose: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix(master);
    h = splitmix(h ^ (purpose as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    h = splitmix(h ^ a.wrapping_mul(0x9FB2_1C65_1E98_DF25));
    splitmix(h ^ b.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn substream(master: u64, purpose: Stream, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(master, purpose, a, b))
}

/// Standard Gumbel (location 0, scale 1) draw by inversion.
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // open interval (0, 1) so both logs are finite
    let u: f64 = loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    -(-u.ln()).ln()
}
