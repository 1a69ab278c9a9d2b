//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from ChaCha8 seeded with the
//! caller's master seed. Independent workers (Gibbs chains, simulation
//! shards, calibration replicates) use distinct ChaCha stream ids under that
//! seed, so output never depends on thread scheduling. Normal variates come
//! from `rand_distr::StandardNormal` (ziggurat), gamma variates from
//! `rand_distr::Gamma` (Marsaglia-Tsang).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

pub type StreamRng = ChaCha8Rng;

/// Random stream `stream` under master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a master seed with an index into an unrelated seed (SplitMix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw from InverseGamma(shape, rate) with density ∝ x^(−shape−1) exp(−rate/x).
pub fn inverse_gamma<R: rand::Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let gamma = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("invalid inverse-gamma({shape}, {rate}): {e}")))?;
    Ok(1.0 / gamma.sample(rng))
}
