//! Counter-based pseudo-random streams with keyed per-trial seed derivation.
//!
//! Trial `i` of an experiment draws from a stream keyed by
//! `derive_seed(master_seed, i)`, so a trial's samples depend only on
//! `(master_seed, i)` and never on which worker executed it or in what
//! order. The stream itself is the SplitMix64 sequence: output `n` is
//! `mix64(key + (n + 1) * GOLDEN_GAMMA)`, a pure function of the key and
//! the counter.

/// Odd constant (2^64 / phi) used to space counter states.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain-separation constant folded into the trial index before mixing,
/// so `derive_seed(m, i)` and the in-stream states of trial `m` never
/// collide structurally.
const INDEX_SALT: u64 = 0x243F_6A88_85A3_08D3;

/// SplitMix64 finalizer: bijective avalanching mix.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the stream key for one trial from the experiment master seed.
///
/// Pure function of `(master_seed, index)`; distinct indices give distinct
/// keys because every stage is bijective in `index`.
#[inline]
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed ^ mix64(index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(INDEX_SALT)))
}

/// Counter-based generator: state advances by a fixed stride, each output
/// is a mix of the state alone.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { state: key }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via the Marsaglia polar method (no trig calls).
    pub fn next_standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}
