//! Reproducible random streams.
//!
//! Every path gets its own ChaCha stream keyed by the master seed and
//! selected by a counter, so results do not depend on thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent purposes within one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Price jumps and trade arrivals; shared by every policy.
    Market = 0,
    /// Fill sizes drawn for the agent.
    Fills = 1,
    /// Anything else a caller needs.
    Aux = 2,
}

/// Substream `path` of purpose `stream` under `seed`.
pub fn substream(seed: u64, path: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path.wrapping_mul(4).wrapping_add(stream as u64));
    rng
}

/// Uniform draw in the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let bits = rng.next_u64() >> 11;
        if bits != 0 {
            return bits as f64 * (1.0 / (1u64 << 53) as f64);
        }
    }
}

/// Exponential draw with the given rate.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}
