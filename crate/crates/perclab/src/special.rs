//! Special functions underlying the crossing formulas.
//!
//! Everything here is a pure function of its arguments: the log-gamma
//! function, the Gauss hypergeometric series with its z -> 1-z connection
//! formula, the regularized incomplete beta I(x; 1/3, 1/3), the complete
//! elliptic integral K(m) by arithmetic-geometric mean, and the fourth
//! power of the Dedekind eta function on the imaginary axis.
//!
//! The beta integral is evaluated by quadrature rather than through the
//! hypergeometric series so the two routes to the crossing probability
//! stay independent and can be cross-checked.

use crate::quad::adaptive_simpson;
use std::f64::consts::PI;

/// Relative accuracy target for series termination.
const SERIES_EPS: f64 = 1e-17;
/// Hard cap on hypergeometric series terms before reporting failure.
const MAX_2F1_TERMS: usize = 20_000;
/// Absolute quadrature tolerance for the incomplete beta integral.
const BETA_QUAD_TOL: f64 = 1e-13;
/// Product factors closer to 1 than this no longer move the eta product.
const ETA_FACTOR_CUTOFF: f64 = 1e-17;
/// Below this the eta q-product needs too many terms for f64 accuracy.
const ETA_MIN_R: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecialError {
    #[error("{function}: argument {value} outside domain {domain}")]
    Domain {
        function: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("{function}: no convergence after {terms} terms (partial value {partial}, tail bound {bound})")]
    NoConvergence {
        function: &'static str,
        terms: usize,
        partial: f64,
        bound: f64,
    },
    #[error("{function}: unsupported parameters ({detail})")]
    Unsupported {
        function: &'static str,
        detail: String,
    },
}

/// Parameter triple (a, b; c) of the Gauss hypergeometric series.
///
/// `c` must stay away from zero and the negative integers, where the
/// series coefficients blow up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeometricParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HypergeometricParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, SpecialError> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(SpecialError::Domain {
                function: "hypergeometric_params",
                value: f64::NAN,
                domain: "finite parameters",
            });
        }
        if is_nonpositive_integer(c) {
            return Err(SpecialError::Domain {
                function: "hypergeometric_params",
                value: c,
                domain: "c not zero or a negative integer",
            });
        }
        Ok(HypergeometricParams { a, b, c })
    }
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 1e-12 && (x - x.round()).abs() < 1e-12
}

/// Lanczos coefficients, g = 7, n = 9, quoted at full published precision.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
///
/// Lanczos approximation above 1/2, reflection below. Relative accuracy
/// is a few 1e-15 across the positive axis.
pub fn ln_gamma(x: f64) -> Result<f64, SpecialError> {
    if !x.is_finite() || x <= 0.0 {
        return Err(SpecialError::Domain {
            function: "ln_gamma",
            value: x,
            domain: "x > 0",
        });
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Gamma(x) Gamma(1-x) = pi / sin(pi x); both factors positive here.
        return PI.ln() - (PI * x).sin().ln() - ln_gamma_unchecked(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function with sign, for any non-pole real argument.
///
/// Used internally by the hypergeometric connection formula, whose
/// coefficients involve gamma at negative non-integer arguments.
pub(crate) fn gamma_signed(x: f64) -> f64 {
    if x >= 0.5 {
        return ln_gamma_unchecked(x).exp();
    }
    // Reflection: Gamma(x) = pi / (sin(pi x) Gamma(1 - x)).
    PI / ((PI * x).sin() * ln_gamma_unchecked(1.0 - x).exp())
}

/// Gauss hypergeometric function 2F1(a, b; c; z) on 0 <= z < 1.
///
/// Direct series for z <= 1/2; for z > 1/2 the standard connection
/// formula in powers of 1 - z, which requires c - a - b non-integer.
pub fn gauss_2f1(params: HypergeometricParams, z: f64) -> Result<f64, SpecialError> {
    let HypergeometricParams { a, b, c } = params;
    if is_nonpositive_integer(c) {
        return Err(SpecialError::Domain {
            function: "gauss_2f1",
            value: c,
            domain: "c not zero or a negative integer",
        });
    }
    if !z.is_finite() || !(0.0..1.0).contains(&z) {
        return Err(SpecialError::Domain {
            function: "gauss_2f1",
            value: z,
            domain: "0 <= z < 1",
        });
    }
    if z <= 0.5 {
        return gauss_series(a, b, c, z);
    }
    gauss_connection(a, b, c, z)
}

/// Raw power series sum_{n>=0} (a)_n (b)_n / ((c)_n n!) z^n.
fn gauss_series(a: f64, b: f64, c: f64, z: f64) -> Result<f64, SpecialError> {
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut small_streak = 0u32;
    for n in 0..MAX_2F1_TERMS {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * z;
        sum += term;
        if term.abs() <= SERIES_EPS * sum.abs() {
            small_streak += 1;
            // Two consecutive negligible terms: the tail is geometric with
            // ratio ~ z, so the sum has settled.
            if small_streak >= 2 {
                return Ok(sum);
            }
        } else {
            small_streak = 0;
        }
    }
    Err(SpecialError::NoConvergence {
        function: "gauss_2f1",
        terms: MAX_2F1_TERMS,
        partial: sum,
        bound: term.abs() / (1.0 - z),
    })
}

/// Connection formula: expresses 2F1 at z through two series in 1 - z.
fn gauss_connection(a: f64, b: f64, c: f64, z: f64) -> Result<f64, SpecialError> {
    let s = c - a - b;
    if (s - s.round()).abs() < 1e-10 {
        return Err(SpecialError::Unsupported {
            function: "gauss_2f1",
            detail: format!(
                "c - a - b = {s} is integral; logarithmic connection case not implemented"
            ),
        });
    }
    let w = 1.0 - z;
    let c1 = gamma_signed(c) * gamma_signed(s) / (gamma_signed(c - a) * gamma_signed(c - b));
    let c2 = gamma_signed(c) * gamma_signed(-s) / (gamma_signed(a) * gamma_signed(b));
    let f1 = gauss_series(a, b, 1.0 - s, w)?;
    let f2 = gauss_series(c - a, c - b, 1.0 + s, w)?;
    Ok(c1 * f1 + c2 * w.powf(s) * f2)
}

/// Regularized incomplete beta function I(x; 1/3, 1/3).
///
/// Integrates (t(1-t))^{-2/3} / B(1/3, 1/3) by adaptive Simpson after the
/// substitution t = u^3, which removes the endpoint singularity; the upper
/// half uses the exact symmetry I(x) = 1 - I(1-x).
pub fn incomplete_beta_13(x: f64) -> Result<f64, SpecialError> {
    if !x.is_finite() || !(0.0..=1.0).contains(&x) {
        return Err(SpecialError::Domain {
            function: "incomplete_beta_13",
            value: x,
            domain: "0 <= x <= 1",
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x > 0.5 {
        return Ok(1.0 - lower_beta_13(1.0 - x));
    }
    Ok(lower_beta_13(x))
}

/// I(x; 1/3, 1/3) for 0 < x <= 1/2.
fn lower_beta_13(x: f64) -> f64 {
    // 1 / B(1/3, 1/3) = Gamma(2/3) / Gamma(1/3)^2.
    let norm = (ln_gamma_unchecked(2.0 / 3.0) - 2.0 * ln_gamma_unchecked(1.0 / 3.0)).exp();
    // t = u^3 turns the integrand into 3 (1 - u^3)^{-2/3}, smooth on
    // [0, x^{1/3}] because 1 - u^3 >= 1/2 when x <= 1/2.
    let integrand = |u: f64| 3.0 * (1.0 - u * u * u).powf(-2.0 / 3.0);
    norm * adaptive_simpson(&integrand, 0.0, x.cbrt(), BETA_QUAD_TOL)
}

/// Complete elliptic integral of the first kind, parameter convention
/// K(m) = int_0^{pi/2} (1 - m sin^2 t)^{-1/2} dt, for 0 <= m < 1.
///
/// Arithmetic-geometric mean iteration: K(m) = pi / (2 AGM(1, sqrt(1-m))).
pub fn elliptic_k(m: f64) -> Result<f64, SpecialError> {
    if !m.is_finite() || !(0.0..1.0).contains(&m) {
        return Err(SpecialError::Domain {
            function: "elliptic_k",
            value: m,
            domain: "0 <= m < 1",
        });
    }
    let mut a = 1.0f64;
    let mut b = (1.0 - m).sqrt();
    // Quadratic convergence: a handful of iterations reaches f64 limits.
    for _ in 0..60 {
        if (a - b).abs() <= 4.0 * f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = an;
    }
    Ok(PI / (2.0 * a))
}

/// Fourth power of the Dedekind eta function at tau = i r, r >= 1e-3:
/// eta(ir)^4 = q^{1/6} prod_{n>=1} (1 - q^n)^4 with q = e^{-2 pi r}.
pub fn dedekind_eta4(r: f64) -> Result<f64, SpecialError> {
    if !r.is_finite() || r < ETA_MIN_R {
        return Err(SpecialError::Domain {
            function: "dedekind_eta4",
            value: r,
            domain: "r >= 1e-3",
        });
    }
    let q = (-2.0 * PI * r).exp();
    let mut prod = 1.0f64;
    let mut qn = q;
    // (1 - q^n)^4 deviates from 1 by ~ 4 q^n; stop once that is below the
    // cutoff. q < 1 strictly, so qn decays geometrically.
    while 4.0 * qn >= ETA_FACTOR_CUTOFF {
        let f = 1.0 - qn;
        let f2 = f * f;
        prod *= f2 * f2;
        qn *= q;
    }
    Ok((-PI * r / 3.0).exp() * prod)
}
