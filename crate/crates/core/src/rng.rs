//! Seed derivation.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by the run
//! seed plus a purpose tag and coordinates (epoch, sample index, ...). Code
//! paths that skip a draw therefore never shift the randomness seen by the
//! others: a run without the regression head sees exactly the same B1 views
//! and initial encoder weights as one with it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    InitEncoder = 1,
    InitProjector = 2,
    InitRegressor = 3,
    InitPredictor = 4,
    InitRegressor2 = 5,
    Shuffle = 10,
    Views = 11,
    LinearEval = 20,
    Synthetic = 30,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a purpose tag and any number of coordinates.
pub fn derive_seed(seed: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ 0x5851_F42D_4C95_7F2D);
    h = splitmix(h ^ stream as u64);
    for &c in coords {
        h = splitmix(h ^ c);
    }
    h
}

pub fn rng_for(seed: u64, stream: Stream, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, coords))
}
