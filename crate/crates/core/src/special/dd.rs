//! Minimal double-double ("dd") arithmetic.
//!
//! The ascending Bessel series suffer heavy cancellation for moderate
//! arguments: the alternating terms grow to ~1e6 before the sum collapses
//! to O(1), which costs ~10 digits in plain f64. Carrying the accumulator
//! and term recurrence in an unevaluated hi+lo pair keeps ~31 significant
//! digits through the cancellation, which is enough to return results
//! accurate to a few ulp up to the series/asymptotic crossover.
//!
//! Only the handful of operations the series need are implemented. All
//! error-free transforms use the classic Dekker/Veltkamp formulations
//! (no fused multiply-add), so results are bit-identical across targets,
//! including wasm.

/// Veltkamp splitting constant, 2^27 + 1.
const SPLIT: f64 = 134_217_729.0;

/// Error-free sum: returns (s, e) with s = fl(a + b) and a + b = s + e.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    (s, e)
}

/// Error-free sum for |a| >= |b|.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Veltkamp split of a into a 26-bit high part and 26-bit low part.
#[inline]
fn veltkamp(a: f64) -> (f64, f64) {
    let t = SPLIT * a;
    let hi = t - (t - a);
    let lo = a - hi;
    (hi, lo)
}

/// Error-free product: returns (p, e) with p = fl(a * b) and a * b = p + e.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = veltkamp(a);
    let (bh, bl) = veltkamp(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

/// A double-double value hi + lo with |lo| <= ulp(hi)/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

// High/low splits below were computed with mpmath at 50 digits:
// lo = value - fl(value), rounded to f64.

/// Euler–Mascheroni constant.
pub(crate) const EULER_GAMMA: Dd = Dd {
    hi: 0.577_215_664_901_532_9,
    lo: -4.942_915_152_430_645e-18,
};

/// 2 / pi.
pub(crate) const TWO_OVER_PI: Dd = Dd {
    hi: 0.636_619_772_367_581_4,
    lo: -3.935_735_335_036_497e-17,
};

/// pi / 4.
pub(crate) const PI_OVER_4: Dd = Dd {
    hi: 0.785_398_163_397_448_3,
    lo: 3.061_616_997_868_383e-17,
};

/// 3 pi / 4.
pub(crate) const THREE_PI_OVER_4: Dd = Dd {
    hi: 2.356_194_490_192_345,
    lo: 9.184_850_993_605_148e-17,
};

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(a: f64) -> Dd {
        Dd { hi: a, lo: 0.0 }
    }

    /// Exact product of two f64 values as a dd.
    #[inline]
    pub fn prod(a: f64, b: f64) -> Dd {
        let (hi, lo) = two_prod(a, b);
        Dd { hi, lo }
    }

    /// 1/b to full dd accuracy.
    #[inline]
    pub fn recip(b: f64) -> Dd {
        Dd::from_f64(1.0).div_f64(b)
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    /// Accurate dd + dd (IEEE-style renormalization).
    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    #[inline]
    pub fn add_f64(self, b: f64) -> Dd {
        let (s1, s2) = two_sum(self.hi, b);
        let s2 = s2 + self.lo;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn div_f64(self, b: f64) -> Dd {
        let q = self.hi / b;
        let (p, e) = two_prod(q, b);
        let r = ((self.hi - p) - e + self.lo) / b;
        let (hi, lo) = quick_two_sum(q, r);
        Dd { hi, lo }
    }
}
