//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, domain, index)`: the seed and domain select the key, the index
//! selects the 64-bit stream number. Trial `k` of a Monte Carlo run always
//! reads stream `k`, so results do not depend on how trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Independent families of random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Intermittency = 1,
    DriftProcess = 2,
    DriverCorrelated = 3,
    DriverIndependent = 4,
    TubeTrial = 5,
    Gaussian = 6,
    Counterexample = 7,
    SeedDerivation = 8,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator for stream `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ (domain as u64).wrapping_mul(0xd6e8_feb8_6659_fd93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A child seed, e.g. for the `k`-th target of a sweep.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut label_state = label;
    let mut state = seed ^ (Domain::SeedDerivation as u64).rotate_left(32);
    state ^= splitmix64(&mut label_state);
    splitmix64(&mut state)
}

pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}
