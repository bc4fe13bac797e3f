//! Counter-based random streams.
//!
//! Every random quantity in the crate is addressed by a `(seed, purpose,
//! stream, index)` tuple. The generator is ChaCha8: the key is derived from
//! `(seed, purpose)`, the 64-bit ChaCha stream id carries the path index and
//! the word position carries the draw index, so any draw can be regenerated
//! without replaying its predecessors and results never depend on how work
//! is scheduled across threads.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

/// Independent key families. Two purposes never share a keystream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Brownian = 0x01,
    BridgeArea = 0x02,
    Seminorm = 0x03,
    Validation = 0x04,
    InnerPaths = 0x05,
}

fn key_for(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    // seed_from_u64 expands through PCG32, so nearby inputs give unrelated keys
    ChaCha8Rng::seed_from_u64(seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Map 64 random bits to a uniform in the open interval (0, 1).
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal quantile by inversion.
#[inline]
pub fn inverse_normal_cdf(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Sequential view of one `(seed, purpose, stream)` keystream.
pub struct CounterStream {
    rng: ChaCha8Rng,
}

impl CounterStream {
    pub fn new(seed: u64, purpose: Purpose, stream: u64) -> Self {
        let mut rng = key_for(seed, purpose);
        rng.set_stream(stream);
        CounterStream { rng }
    }

    /// Position the stream so that the next draw is draw number `index`.
    pub fn seek(&mut self, index: u64) {
        // one draw consumes two 32-bit words
        self.rng.set_word_pos(2 * index as u128);
    }

    pub fn next_bits(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        open_unit(self.rng.next_u64())
    }

    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform())
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }
}

/// Random access to a single standard normal draw.
pub fn normal_at(seed: u64, purpose: Purpose, stream: u64, index: u64) -> f64 {
    let mut s = CounterStream::new(seed, purpose, stream);
    s.seek(index);
    s.normal()
}
