//! 64-bit linear congruential generator that drives pad construction, and the
//! shift-add reseed rule of the feedback loop.

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MULTIPLIER: u64 = 6364136223846793005;
pub const DEFAULT_INCREMENT: u64 = 1442695040888963407;
pub const DEFAULT_SHIFT: u32 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LcgError {
    #[error("multiplier {0:#x} is not congruent to 1 mod 4")]
    BadMultiplier(u64),
    #[error("increment {0:#x} is even")]
    EvenIncrement(u64),
    #[error("shift {0} must be below 64")]
    ShiftTooLarge(u32),
}

/// A source of uniform 32-bit words, with unbiased bounded draws on top.
pub trait WordSource {
    fn next_u32(&mut self) -> u32;

    fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform integer in `[0, bound)` by rejection sampling.
    ///
    /// For `bound <= 2^32` one 32-bit word is drawn per attempt and words at or
    /// above the largest multiple of `bound` are discarded, so `bound = 1` costs
    /// exactly one word and a power-of-two bound never rejects. Larger bounds
    /// use 64-bit words the same way. `bound` must be nonzero.
    fn next_bounded(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        if bound <= SMALL_BOUNDS as u64 {
            let zone = SMALL_ZONES[bound as usize];
            loop {
                let w = self.next_u32();
                if (w as u64) < zone {
                    return small_mod(w, bound as u32) as u64;
                }
            }
        }
        if bound <= 1 << 32 {
            let range = 1u64 << 32;
            let zone = range - range % bound;
            loop {
                let w = self.next_u32() as u64;
                if w < zone {
                    return w % bound;
                }
            }
        } else {
            let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
            loop {
                let w = self.next_u64();
                if w <= zone {
                    return w % bound;
                }
            }
        }
    }
}

const SMALL_BOUNDS: usize = 16;

// SMALL_ZONES[b] = largest multiple of b not above 2^32; words below it are
// accepted.
const SMALL_ZONES: [u64; SMALL_BOUNDS + 1] = {
    let mut zones = [1u64 << 32; SMALL_BOUNDS + 1];
    let mut b = 1;
    while b <= SMALL_BOUNDS {
        zones[b] = (1u64 << 32) - (1u64 << 32) % b as u64;
        b += 1;
    }
    zones
};

// Constant divisors let the compiler replace the division with a multiply.
#[inline(always)]
fn small_mod(w: u32, b: u32) -> u32 {
    match b {
        1 => 0,
        2 => w % 2,
        3 => w % 3,
        4 => w % 4,
        5 => w % 5,
        6 => w % 6,
        7 => w % 7,
        8 => w % 8,
        9 => w % 9,
        10 => w % 10,
        11 => w % 11,
        12 => w % 12,
        _ => w % b,
    }
}

impl<R: RngCore + ?Sized> WordSource for R {
    fn next_u32(&mut self) -> u32 {
        RngCore::next_u32(self)
    }
}

/// `seed' = multiplier * seed + increment (mod 2^64)`.
///
/// Output words are the high 32 bits of the advanced state; the low bits of a
/// power-of-two-modulus LCG have short periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lcg {
    seed: u64,
    multiplier: u64,
    increment: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            multiplier: DEFAULT_MULTIPLIER,
            increment: DEFAULT_INCREMENT,
        }
    }

    /// Custom constants; must satisfy the Hull–Dobell conditions for 2^64.
    pub fn with_constants(seed: u64, multiplier: u64, increment: u64) -> Result<Self, LcgError> {
        if multiplier % 4 != 1 {
            return Err(LcgError::BadMultiplier(multiplier));
        }
        if increment.is_multiple_of(2) {
            return Err(LcgError::EvenIncrement(increment));
        }
        Ok(Self {
            seed,
            multiplier,
            increment,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn multiplier(&self) -> u64 {
        self.multiplier
    }

    pub fn increment(&self) -> u64 {
        self.increment
    }

    #[inline]
    pub fn step(&mut self) -> u64 {
        self.seed = self
            .multiplier
            .wrapping_mul(self.seed)
            .wrapping_add(self.increment);
        self.seed
    }

    /// `seed' = (seed << k) + t_mod`, both wrapping mod 2^64. Constants are
    /// untouched.
    pub fn reseed_shift_add(&mut self, t_mod: u64, k: u32) -> Result<(), LcgError> {
        if k >= 64 {
            return Err(LcgError::ShiftTooLarge(k));
        }
        self.seed = (self.seed << k).wrapping_add(t_mod);
        Ok(())
    }
}

impl WordSource for Lcg {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.step() >> 32) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Counts words consumed.
    struct Counting<S>(S, usize);

    impl<S: WordSource> WordSource for Counting<S> {
        fn next_u32(&mut self) -> u32 {
            self.1 += 1;
            self.0.next_u32()
        }
    }

    #[test]
    fn zero_seed_steps_to_increment() {
        let mut lcg = Lcg::with_constants(0, 5, 3).unwrap();
        assert_eq!(lcg.step(), 3);
        let mut lcg = Lcg::new(0);
        assert_eq!(lcg.step(), DEFAULT_INCREMENT);
    }

    #[test]
    fn equal_states_agree() {
        let mut a = Lcg::new(99);
        let mut b = Lcg::new(99);
        for _ in 0..100 {
            assert_eq!(a.next_u32(), b.next_u32());
        }
    }

    #[test]
    fn two_words_concatenate() {
        let mut a = Lcg::new(1);
        let mut b = Lcg::new(1);
        let hi = b.next_u32() as u64;
        let lo = b.next_u32() as u64;
        assert_eq!(a.next_u64(), (hi << 32) | lo);
    }

    #[test]
    fn hull_dobell_checked() {
        assert_eq!(
            Lcg::with_constants(0, 3, 1),
            Err(LcgError::BadMultiplier(3))
        );
        assert_eq!(
            Lcg::with_constants(0, 5, 2),
            Err(LcgError::EvenIncrement(2))
        );
        assert!(Lcg::with_constants(0, DEFAULT_MULTIPLIER, DEFAULT_INCREMENT).is_ok());
    }

    #[test]
    fn reseed_examples() {
        let mut l = Lcg::new(0);
        l.reseed_shift_add(5, 7).unwrap();
        assert_eq!(l.seed(), 5);
        let mut l = Lcg::new(1);
        l.reseed_shift_add(3, 4).unwrap();
        assert_eq!(l.seed(), 19);
        let mut l = Lcg::new(1 << 63);
        l.reseed_shift_add(0, 1).unwrap();
        assert_eq!(l.seed(), 0);
        assert_eq!(l.multiplier(), DEFAULT_MULTIPLIER);
        assert_eq!(l.increment(), DEFAULT_INCREMENT);
        assert_eq!(l.reseed_shift_add(0, 64), Err(LcgError::ShiftTooLarge(64)));
    }

    #[test]
    fn bound_one_consumes_one_word() {
        let mut src = Counting(Lcg::new(7), 0);
        for _ in 0..10 {
            assert_eq!(src.next_bounded(1), 0);
        }
        assert_eq!(src.1, 10);
    }

    #[test]
    fn power_of_two_bound_never_rejects() {
        let mut src = Counting(Lcg::new(7), 0);
        let mut raw = Lcg::new(7);
        for _ in 0..1000 {
            let w = raw.next_u32() as u64;
            assert_eq!(src.next_bounded(1 << 32), w);
        }
        assert_eq!(src.1, 1000);
        for _ in 0..1000 {
            src.next_bounded(16);
        }
        assert_eq!(src.1, 2000);
    }

    /// Emits a fixed word sequence.
    struct Words(Vec<u32>, usize);

    impl WordSource for Words {
        fn next_u32(&mut self) -> u32 {
            let w = self.0[self.1];
            self.1 += 1;
            w
        }
    }

    #[test]
    fn rejection_skips_the_partial_block() {
        // 2^32 mod 3 = 1, so the only rejected word is u32::MAX.
        let mut src = Words(vec![u32::MAX, u32::MAX - 1], 0);
        assert_eq!(src.next_bounded(3), (u32::MAX as u64 - 1) % 3);
        assert_eq!(src.1, 2);
    }

    /// Generic rejection path, without the small-bound tables.
    fn reference_bounded(words: &mut Words, bound: u64) -> u64 {
        let range = 1u64 << 32;
        let zone = range - range % bound;
        loop {
            let w = words.next_u32() as u64;
            if w < zone {
                return w % bound;
            }
        }
    }

    #[test]
    fn small_bound_tables_match_generic_rejection() {
        let mut edge = vec![
            0,
            1,
            2,
            u32::MAX,
            u32::MAX - 1,
            u32::MAX - 2,
            u32::MAX - 5,
            1 << 31,
        ];
        let mut lcg = Lcg::new(5);
        edge.extend((0..500).map(|_| lcg.next_u32()));
        edge.extend([7; 20]);
        for bound in 1..=16u64 {
            let mut fast = Words(edge.clone(), 0);
            let mut slow = Words(edge.clone(), 0);
            while fast.1 < 500 {
                assert_eq!(
                    fast.next_bounded(bound),
                    reference_bounded(&mut slow, bound)
                );
                assert_eq!(fast.1, slow.1, "bound {bound}");
            }
        }
    }

    #[test]
    fn wide_bounds_stay_in_range() {
        let mut lcg = Lcg::new(3);
        let bound = (1u64 << 40) + 17;
        for _ in 0..1000 {
            assert!(lcg.next_bounded(bound) < bound);
        }
        assert!(lcg.next_bounded(u64::MAX) < u64::MAX);
    }
}
