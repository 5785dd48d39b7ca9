//! Minimal double-double arithmetic: an unevaluated sum hi + lo of two
//! doubles carrying roughly 32 significant decimal digits.
//!
//! Used by the exact enumeration to keep partition-function coefficients
//! accurate to well below one f64 ulp before the single final rounding,
//! which is what lets probability totals evaluate to exactly 1.0.

/// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

/// Error-free sum: a + b = s + e exactly (Knuth).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// two_sum for |a| >= |b|.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Error-free product via fused multiply-add: a * b = p + e exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

pub(crate) const DD_ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
pub(crate) const DD_ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

impl Dd {
    pub(crate) fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// The exact difference 1 - x as a double-double (error-free: the
    /// residual of the rounded subtraction fits in the low word).
    pub(crate) fn one_minus(x: f64) -> Dd {
        let (hi, lo) = two_sum(1.0, -x);
        Dd { hi, lo }
    }

    pub(crate) fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let (hi, lo) = quick_two_sum(s, e + self.lo + other.lo);
        Dd { hi, lo }
    }

    pub(crate) fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub(crate) fn mul_f64(self, x: f64) -> Dd {
        self.mul(Dd::from_f64(x))
    }

    /// Round once to the nearest f64.
    pub(crate) fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}
