//! Counter-based random numbers.
//!
//! Every random value the sampler consumes is a pure function of an
//! [`RngKey`]. Nothing depends on visiting order or on which thread touched
//! a token, which is what lets the reordered sweeps be checked bit-for-bit
//! against a naive document-order pass.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SALT_TOKEN: u64 = 0xD6E8_FEB8_6659_FD93;
const SALT_COUNTER: u64 = 0xA076_1D64_78BD_642F;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which sweep a value belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Phase {
    Init = 1,
    Word = 2,
    Doc = 3,
    Baseline = 4,
}

/// What a value is used for within one token's update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Initial value of slot `i` (0 is the assignment, 1..=M the proposals).
    Init(u16),
    /// MH acceptance test for stored proposal `i`.
    Accept(u16),
    /// Fresh draw for proposal slot `i`.
    Propose(u16),
}

impl Purpose {
    #[inline]
    fn tag(self) -> u64 {
        match self {
            Purpose::Init(i) => (1 << 16) | i as u64,
            Purpose::Accept(i) => (2 << 16) | i as u64,
            Purpose::Propose(i) => (3 << 16) | i as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngKey {
    pub seed: u64,
    pub iteration: u32,
    pub phase: Phase,
    /// Global token index in document-major order.
    pub token: u64,
    pub purpose: Purpose,
    pub counter: u32,
}

/// Uniform 64-bit value for `key`.
pub fn rng_at(key: RngKey) -> u64 {
    PhaseStream::new(key.seed, key.iteration, key.phase)
        .token(key.token)
        .value(key.purpose, key.counter)
}

/// Key prefix shared by every token of one phase of one iteration.
#[derive(Clone, Copy, Debug)]
pub struct PhaseStream {
    base: u64,
}

impl PhaseStream {
    pub fn new(seed: u64, iteration: u32, phase: Phase) -> Self {
        let a = mix64(seed ^ GOLDEN);
        let b = mix64(a ^ ((iteration as u64) << 8 | phase as u64).wrapping_mul(GOLDEN));
        Self { base: b }
    }

    #[inline]
    pub fn token(&self, token: u64) -> TokenStream {
        TokenStream {
            base: mix64(self.base.wrapping_add(token.wrapping_mul(SALT_TOKEN))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TokenStream {
    base: u64,
}

impl TokenStream {
    #[inline]
    pub fn value(&self, purpose: Purpose, counter: u32) -> u64 {
        let p = mix64(self.base ^ purpose.tag().wrapping_mul(GOLDEN));
        mix64(p.wrapping_add((counter as u64 + 1).wrapping_mul(SALT_COUNTER)))
    }

    /// Sequential reader over the values of one purpose.
    #[inline]
    pub fn cursor(&self, purpose: Purpose) -> KeyedCursor {
        KeyedCursor {
            stream: *self,
            purpose,
            counter: 0,
        }
    }
}

/// Reads consecutive counters of one (token, purpose) key.
#[derive(Clone, Copy, Debug)]
pub struct KeyedCursor {
    stream: TokenStream,
    purpose: Purpose,
    counter: u32,
}

impl UniformSource for KeyedCursor {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        let v = self.stream.value(self.purpose, self.counter);
        self.counter += 1;
        v
    }
}

/// Anything that yields uniform 64-bit words.
pub trait UniformSource {
    fn next_u64(&mut self) -> u64;
}

/// Adapter so any `rand` generator can drive the samplers.
pub struct RandSource<'a, R: rand::RngCore + ?Sized>(pub &'a mut R);

impl<R: rand::RngCore + ?Sized> UniformSource for RandSource<'_, R> {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}

/// Maps a 64-bit word to [0, 1) with 53 bits of resolution.
#[inline]
pub fn unit_f64(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Maps a 64-bit word to [0, n) by multiply-shift.
#[inline]
pub fn below(u: u64, n: u64) -> u64 {
    ((u as u128 * n as u128) >> 64) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(counter: u32) -> RngKey {
        RngKey {
            seed: 42,
            iteration: 3,
            phase: Phase::Word,
            token: 17,
            purpose: Purpose::Accept(1),
            counter,
        }
    }

    #[test]
    fn same_key_same_value() {
        assert_eq!(rng_at(key(5)), rng_at(key(5)));
        assert_ne!(rng_at(key(5)), rng_at(key(6)));
    }

    #[test]
    fn cursor_matches_rng_at() {
        let k = key(0);
        let mut cur = PhaseStream::new(k.seed, k.iteration, k.phase)
            .token(k.token)
            .cursor(k.purpose);
        for c in 0..10 {
            assert_eq!(cur.next_u64(), rng_at(key(c)));
        }
    }

    fn chi2_sf(x: f64, dof: f64) -> f64 {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        ChiSquared::new(dof).unwrap().sf(x)
    }

    #[test]
    fn consecutive_counters_are_uniform() {
        let n = 1_000_000u32;
        let mut buckets = [0u64; 256];
        for c in 0..n {
            buckets[(rng_at(key(c)) >> 56) as usize] += 1;
        }
        let expected = n as f64 / 256.0;
        let chi2: f64 = buckets.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
        let p = chi2_sf(chi2, 255.0);
        assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn single_field_change_flips_half_the_bits() {
        let mut total = 0u64;
        let pairs = 10_000u64;
        for i in 0..pairs {
            let a = RngKey {
                seed: i,
                iteration: (i % 97) as u32,
                phase: Phase::Doc,
                token: i * 31,
                purpose: Purpose::Propose((i % 4) as u16),
                counter: (i % 3) as u32,
            };
            let b = match i % 5 {
                0 => RngKey { seed: a.seed ^ 1, ..a },
                1 => RngKey {
                    iteration: a.iteration + 1,
                    ..a
                },
                2 => RngKey {
                    token: a.token + 1,
                    ..a
                },
                3 => RngKey {
                    purpose: Purpose::Accept((i % 4) as u16),
                    ..a
                },
                _ => RngKey {
                    counter: a.counter + 1,
                    ..a
                },
            };
            total += (rng_at(a) ^ rng_at(b)).count_ones() as u64;
        }
        let mean = total as f64 / pairs as f64;
        assert!((mean - 32.0).abs() < 0.5, "mean hamming distance {mean}");
    }

    #[test]
    fn below_stays_in_range() {
        for c in 0..1000 {
            assert!(below(rng_at(key(c)), 7) < 7);
        }
        assert_eq!(below(u64::MAX, 1), 0);
        assert!(unit_f64(u64::MAX) < 1.0);
    }
}
