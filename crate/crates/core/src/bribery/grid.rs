//! Exact integer representation of stake amounts for subset search.
//!
//! A column is mapped onto the grid 2^e with e = ⌊log2 max⌋ − 100, so every
//! amount within a factor 2^48 of the largest one is represented without
//! loss and sums of up to 2^26 amounts fit in an `i128`. Smaller amounts are
//! floored; targets are ceiled, so a coalition that reaches the target on
//! the grid also reaches it in real arithmetic.

const HEADROOM: i32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Grid {
    exp: i32,
}

/// Splits a finite positive f64 into (mantissa, exponent) with v = m·2^x.
fn decompose(v: f64) -> (u64, i32) {
    let bits = v.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    }
}

fn pow2(e: i32) -> f64 {
    if (-1022..=1023).contains(&e) {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        2f64.powi(e)
    }
}

impl Grid {
    /// Grid for amounts no larger than `max`, which must be positive.
    pub(crate) fn for_max(max: f64) -> Grid {
        debug_assert!(max > 0.0 && max.is_finite());
        let (m, x) = decompose(max);
        let top = x + 63 - m.leading_zeros() as i32;
        Grid {
            exp: top - HEADROOM,
        }
    }

    fn split(&self, v: f64) -> (i128, bool) {
        if v <= 0.0 {
            return (0, false);
        }
        let (m, x) = decompose(v);
        let shift = x - self.exp;
        if shift >= 0 {
            ((m as i128) << shift, false)
        } else if -shift >= 64 {
            (0, m != 0)
        } else {
            let s = (-shift) as u32;
            ((m >> s) as i128, m & ((1u64 << s) - 1) != 0)
        }
    }

    pub(crate) fn floor(&self, v: f64) -> i128 {
        self.split(v).0
    }

    pub(crate) fn ceil(&self, v: f64) -> i128 {
        let (q, rem) = self.split(v);
        q + rem as i128
    }

    pub(crate) fn to_f64(self, q: i128) -> f64 {
        q as f64 * pow2(self.exp)
    }
}
