//! Boundary geometry: cross-ratios of boundary quads and the conformal
//! data of rectangles and equilateral triangles.
//!
//! A crossing problem is specified by four marked boundary points in
//! cyclic order; all formulas depend on them only through the cross-ratio
//!
//!   eta = (z1 - z2)(z3 - z4) / ((z1 - z3)(z2 - z4)),
//!
//! which lies in (0, 1) for a strictly cyclically ordered quad and is
//! invariant under orientation-preserving Moebius maps of the boundary
//! circle. Rectangles enter through the elliptic modulus k of the
//! half-plane map: a rectangle with aspect ratio r = 2K(k^2)/K(1-k^2)
//! has eta = ((1-k)/(1+k))^2.

use crate::special::{elliptic_k, incomplete_beta_13};
use serde::{Deserialize, Serialize};

/// Absolute accuracy of the aspect-ratio inversion r(k) = r.
const ASPECT_TOL: f64 = 1e-13;
/// Bisection bracket for the modulus; r(k) spans roughly [0.16, 13] here.
/// Below k ~ 1e-8 the complementary parameter 1 - k^2 rounds to exactly 1
/// in f64 and K(1 - k^2) is no longer computable, so more extreme aspect
/// ratios are reported as not invertible rather than silently wrong.
const MODULUS_LO: f64 = 1e-8;
const MODULUS_HI: f64 = 1.0 - 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate boundary quad: {0}")]
    Degenerate(String),
    #[error("boundary points are not strictly cyclically ordered")]
    NotCyclic,
    #[error("cross-ratio {0} outside [0, 1]")]
    CrossRatioOutOfRange(f64),
    #[error("{function}: argument {value} outside domain {domain}")]
    Domain {
        function: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("aspect ratio {0} outside the invertible range of the modulus bracket")]
    NotInvertible(f64),
}

/// A point on the boundary of the upper half-plane: the extended real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryPoint {
    Finite(f64),
    Infinity,
}

impl BoundaryPoint {
    /// Angle on the boundary circle under stereographic projection,
    /// theta = 2 atan(z) in (-pi, pi], with infinity at pi. Strictly
    /// increasing in z, so cyclic order of points equals cyclic order
    /// of angles.
    fn circle_angle(self) -> f64 {
        match self {
            BoundaryPoint::Finite(z) => 2.0 * z.atan(),
            BoundaryPoint::Infinity => std::f64::consts::PI,
        }
    }

    fn is_finite_value(self) -> bool {
        matches!(self, BoundaryPoint::Finite(z) if z.is_finite())
    }
}

/// Four distinct boundary points in strict counterclockwise cyclic order.
/// The crossing arcs are gamma1 = (z1, z2) and gamma2 = (z3, z4).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryQuad {
    z1: BoundaryPoint,
    z2: BoundaryPoint,
    z3: BoundaryPoint,
    z4: BoundaryPoint,
}

impl BoundaryQuad {
    /// Validates distinctness and cyclic order. At most one point may be
    /// at infinity; rotating it into the last slot leaves z1 < z2 < z3.
    pub fn new(
        z1: BoundaryPoint,
        z2: BoundaryPoint,
        z3: BoundaryPoint,
        z4: BoundaryPoint,
    ) -> Result<Self, GeometryError> {
        let pts = [z1, z2, z3, z4];
        for (i, p) in pts.iter().enumerate() {
            if !matches!(p, BoundaryPoint::Infinity) && !p.is_finite_value() {
                return Err(GeometryError::Degenerate(format!(
                    "point {} is not finite",
                    i + 1
                )));
            }
            for q in pts.iter().skip(i + 1) {
                if p == q {
                    return Err(GeometryError::Degenerate(format!(
                        "coincident points {p:?}"
                    )));
                }
            }
        }
        // Strict cyclic order: walking z1 -> z2 -> z3 -> z4 -> z1 along
        // the boundary circle wraps exactly once.
        let th: Vec<f64> = pts.iter().map(|p| p.circle_angle()).collect();
        let mut descents = 0;
        for i in 0..4 {
            let a = th[i];
            let b = th[(i + 1) % 4];
            if a == b {
                return Err(GeometryError::Degenerate(
                    "points collide on the boundary circle".into(),
                ));
            }
            if b < a {
                descents += 1;
            }
        }
        if descents != 1 {
            return Err(GeometryError::NotCyclic);
        }
        Ok(BoundaryQuad { z1, z2, z3, z4 })
    }

    pub fn from_reals(z1: f64, z2: f64, z3: f64, z4: f64) -> Result<Self, GeometryError> {
        BoundaryQuad::new(
            BoundaryPoint::Finite(z1),
            BoundaryPoint::Finite(z2),
            BoundaryPoint::Finite(z3),
            BoundaryPoint::Finite(z4),
        )
    }

    pub fn points(&self) -> [BoundaryPoint; 4] {
        [self.z1, self.z2, self.z3, self.z4]
    }
}

/// Cross-ratio of a boundary quad; always in [0, 1], and in (0, 1) for
/// valid quads. Endpoint values represent degenerate limits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CrossRatio(f64);

impl CrossRatio {
    pub fn new(eta: f64) -> Result<Self, GeometryError> {
        if !eta.is_finite() || !(0.0..=1.0).contains(&eta) {
            return Err(GeometryError::CrossRatioOutOfRange(eta));
        }
        Ok(CrossRatio(eta))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The cross-ratio of the quad with the two arcs exchanged.
    pub fn dual(self) -> CrossRatio {
        CrossRatio(1.0 - self.0)
    }
}

impl TryFrom<f64> for CrossRatio {
    type Error = GeometryError;
    fn try_from(v: f64) -> Result<Self, GeometryError> {
        CrossRatio::new(v)
    }
}

impl From<CrossRatio> for f64 {
    fn from(eta: CrossRatio) -> f64 {
        eta.0
    }
}

/// Cross-ratio eta = (z1-z2)(z3-z4)/((z1-z3)(z2-z4)).
///
/// A point at infinity drops out by the usual limit: the two factors
/// containing it cancel to a sign.
pub fn cross_ratio(quad: &BoundaryQuad) -> Result<CrossRatio, GeometryError> {
    use BoundaryPoint::*;
    let [p1, p2, p3, p4] = quad.points();
    let eta = match (p1, p2, p3, p4) {
        (Finite(z1), Finite(z2), Finite(z3), Finite(z4)) => {
            (z1 - z2) * (z3 - z4) / ((z1 - z3) * (z2 - z4))
        }
        (Infinity, Finite(z2), Finite(z3), Finite(z4)) => (z3 - z4) / (z2 - z4),
        (Finite(z1), Infinity, Finite(z3), Finite(z4)) => -(z3 - z4) / (z1 - z3),
        (Finite(z1), Finite(z2), Infinity, Finite(z4)) => -(z1 - z2) / (z2 - z4),
        (Finite(z1), Finite(z2), Finite(z3), Infinity) => (z1 - z2) / (z1 - z3),
        // BoundaryQuad::new admits at most one point at infinity.
        _ => unreachable!("quad validated with at most one infinite point"),
    };
    CrossRatio::new(eta)
}

/// Conformal data of a rectangle: aspect ratio r = width/height, the
/// elliptic modulus k of the half-plane map, and the cross-ratio of the
/// four corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RectangleGeometry {
    pub r: f64,
    pub k: f64,
    pub eta: CrossRatio,
}

/// Aspect ratio r(k) = 2 K(k^2) / K(1 - k^2), strictly increasing in k.
fn aspect_from_modulus(k: f64) -> f64 {
    let m = k * k;
    let kw = elliptic_k(m).expect("0 < k < 1 keeps m inside [0, 1)");
    let kl = elliptic_k(1.0 - m).expect("0 < k < 1 keeps 1 - m inside (0, 1)");
    2.0 * kw / kl
}

/// Rectangle data from the elliptic modulus, 0 < k < 1.
///
/// The half-plane map sends the corners to (-1/k, -1, 1, 1/k), whose
/// cross-ratio is ((1-k)/(1+k))^2. Moduli within 1e-8 of either endpoint
/// are rejected: there 1 - k^2 (or k^2) degenerates in f64 and the
/// elliptic integrals lose all meaning.
pub fn rectangle_from_modulus(k: f64) -> Result<RectangleGeometry, GeometryError> {
    if !k.is_finite() || !(MODULUS_LO..=MODULUS_HI).contains(&k) {
        return Err(GeometryError::Domain {
            function: "rectangle_from_modulus",
            value: k,
            domain: "1e-8 <= k <= 1 - 1e-8",
        });
    }
    let eta = CrossRatio::new(((1.0 - k) / (1.0 + k)).powi(2))?;
    Ok(RectangleGeometry {
        r: aspect_from_modulus(k),
        k,
        eta,
    })
}

/// Full rectangle data for a given aspect ratio r > 0, inverting the
/// strictly increasing r(k) by bisection.
///
/// Termination is by residual (mid-range aspects reach |r(k) - r| below
/// 1e-13) or by bracket collapse to a few ulps of k. Near the window
/// edges the evaluation of r(k) itself carries cancellation noise of
/// order 1e-9 — the complementary parameter 1 - k^2 is formed in f64 —
/// so a residual test alone would reject perfectly good roots; the
/// collapsed bracket still pins k, and hence the cross-ratio, to better
/// than 1e-10 everywhere in the supported window.
pub fn rectangle_from_aspect(r: f64) -> Result<RectangleGeometry, GeometryError> {
    if !r.is_finite() || r <= 0.0 {
        return Err(GeometryError::Domain {
            function: "rectangle_eta",
            value: r,
            domain: "r > 0",
        });
    }
    let (mut lo, mut hi) = (MODULUS_LO, MODULUS_HI);
    if aspect_from_modulus(lo) > r || aspect_from_modulus(hi) < r {
        // f64 cannot place k accurately enough for extreme aspects.
        return Err(GeometryError::NotInvertible(r));
    }
    let mut k = 0.5 * (lo + hi);
    for _ in 0..200 {
        let rk = aspect_from_modulus(k);
        if (rk - r).abs() <= ASPECT_TOL {
            break;
        }
        if rk < r {
            lo = k;
        } else {
            hi = k;
        }
        let next = 0.5 * (lo + hi);
        if hi - lo <= f64::EPSILON * next {
            k = next;
            break;
        }
        k = next;
    }
    rectangle_from_modulus(k)
}

/// Cross-ratio of a rectangle with aspect ratio r (width/height).
///
/// Strictly decreasing in r: wide rectangles are hard to cross.
pub fn rectangle_eta(r: f64) -> Result<CrossRatio, GeometryError> {
    Ok(rectangle_from_aspect(r)?.eta)
}

/// Cross-ratio of the equilateral-triangle observable: the eta solving
/// incomplete_beta_13(eta) = x, so that the crossing probability toward
/// a boundary segment of length x is exactly x.
///
/// Strictly increasing and continuous on [0, 1], with exact endpoints.
pub fn triangle_eta(x: f64) -> Result<CrossRatio, GeometryError> {
    if !x.is_finite() || !(0.0..=1.0).contains(&x) {
        return Err(GeometryError::Domain {
            function: "triangle_eta",
            value: x,
            domain: "0 <= x <= 1",
        });
    }
    if x == 0.0 {
        return CrossRatio::new(0.0);
    }
    if x == 1.0 {
        return CrossRatio::new(1.0);
    }
    let beta = |e: f64| incomplete_beta_13(e).expect("eta stays inside [0, 1]");
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // d/d eta of the beta function is >= 0.47 on (0,1), so interval width
    // 1e-13 leaves a residual well under the 1e-11 contract.
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if beta(mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    CrossRatio::new(0.5 * (lo + hi))
}
