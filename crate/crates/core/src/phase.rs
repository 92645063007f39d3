//! Points of the circle `T = R/Z` in 128-bit fixed point.
//!
//! A [`Phase`] stores `x ∈ [0, 1)` as `x · 2^128`. Addition wraps, which is
//! exactly addition mod 1, so rotations compose without drift.

use std::fmt;
use std::ops::{Add, Neg, Sub};

const LOW: u128 = u64::MAX as u128;
const TWO_POW_128: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Phase(pub u128);

impl Phase {
    pub const ZERO: Phase = Phase(0);
    pub const HALF: Phase = Phase(1 << 127);

    /// Fractional part of `x`, exact for every finite double.
    pub fn from_f64(x: f64) -> Phase {
        debug_assert!(x.is_finite());
        let f = x - x.floor();
        // `f` has at most 53 significant bits, so `f · 2^128` is an integer
        // representable in f64 and the cast is exact. f == 1.0 can only occur
        // through rounding of tiny negatives; it is 0 mod 1.
        if f >= 1.0 {
            return Phase::ZERO;
        }
        Phase((f * TWO_POW_128) as u128)
    }

    /// `floor(num / den · 2^128)` for `0 ≤ num < den`.
    pub fn from_ratio(num: u64, den: u64) -> Phase {
        assert!(den > 0 && num < den, "ratio must lie in [0, 1)");
        let den = den as u128;
        let mut rem = num as u128;
        let mut q = 0u128;
        for _ in 0..128 {
            rem <<= 1;
            q <<= 1;
            if rem >= den {
                rem -= den;
                q |= 1;
            }
        }
        Phase(q)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / TWO_POW_128
    }

    /// `n · x mod 1`.
    pub fn mul_int(self, n: i64) -> Phase {
        let p = Phase(self.0.wrapping_mul(n.unsigned_abs() as u128));
        if n < 0 {
            -p
        } else {
            p
        }
    }

    /// Distance to the nearest integer, as a phase in `[0, 1/2]`.
    pub fn dist_to_zero(self) -> u128 {
        self.0.min(self.0.wrapping_neg())
    }

    /// `x · y mod 1`, truncated to 128 bits.
    pub fn mul_phase(self, y: Phase) -> Phase {
        let (a1, a0) = (self.0 >> 64, self.0 & LOW);
        let (b1, b0) = (y.0 >> 64, y.0 & LOW);
        let lo = a0 * b0;
        let mid1 = a1 * b0;
        let mid2 = a0 * b1;
        let (mid, c) = mid1.overflowing_add(mid2);
        let (_, c2) = lo.overflowing_add(mid << 64);
        let hi = a1 * b1 + (mid >> 64) + ((c as u128) << 64) + c2 as u128;
        Phase(hi)
    }

    /// `floor(x · m)` for `m ≥ 1`: the cell of an `m`-point partition of `[0, 1)`.
    pub fn cell(self, m: u64) -> u64 {
        mul_u128_u64(self.0, m).0
    }
}

impl Add for Phase {
    type Output = Phase;
    fn add(self, o: Phase) -> Phase {
        Phase(self.0.wrapping_add(o.0))
    }
}

impl Sub for Phase {
    type Output = Phase;
    fn sub(self, o: Phase) -> Phase {
        Phase(self.0.wrapping_sub(o.0))
    }
}

impl Neg for Phase {
    type Output = Phase;
    fn neg(self) -> Phase {
        Phase(self.0.wrapping_neg())
    }
}

impl fmt::Debug for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Phase({:.17})", self.to_f64())
    }
}

/// Full 192-bit product `a · b`, returned as `(high 64 bits, low 128 bits)`.
pub fn mul_u128_u64(a: u128, b: u64) -> (u64, u128) {
    let b = b as u128;
    let a_lo = a & (u64::MAX as u128);
    let a_hi = a >> 64;
    let p_lo = a_lo * b;
    let p_hi = a_hi * b;
    let (lo, carry) = p_lo.overflowing_add(p_hi << 64);
    let hi = (p_hi >> 64) + carry as u128;
    (hi as u64, lo)
}
