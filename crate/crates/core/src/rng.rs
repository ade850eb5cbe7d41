//! Deterministic random streams.
//!
//! All randomness comes from ChaCha8 seeded with the run seed. Independent
//! work items (a cohort, a bootstrap replicate, a capability trajectory) get
//! their own ChaCha stream, selected by mixing a domain tag and the item's
//! coordinates with SplitMix64. The same (seed, tag, coordinates) always
//! produce the same numbers, on any platform and in any thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains; keeps e.g. replicate 3 of a split apart from year 3 of a
/// trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Cohort = 1,
    Trajectory = 2,
    SplitHalf = 3,
    CoverageSim = 4,
    Collaboration = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a, used to turn journal ids into stream coordinates.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn stream_id(domain: Domain, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(domain as u64), |acc, &c| splitmix64(acc ^ c))
}

pub fn stream(seed: u64, domain: Domain, coords: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, coords));
    rng
}
