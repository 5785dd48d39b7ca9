//! Crossing-probability laboratory for two-dimensional critical
//! percolation.
//!
//! Three independent routes to the same continuum observables are
//! implemented and cross-validated:
//!
//! * exact conformal predictions: the hypergeometric crossing law in the
//!   cross-ratio, the crossing-cluster mean, the Dedekind-eta integral
//!   form on rectangles, the incomplete-beta form on triangles and the
//!   periodic-strip law ([`formulas`], [`geometry`], [`special`]);
//! * stochastic sampling: lattice Monte Carlo with union-find cluster
//!   counting ([`lattice`]) and the Loewner hitting race ([`sle`]);
//! * exhaustive ground truth on small graphs: random-cluster partition
//!   functions as polynomials in the cluster fugacity ([`enumeration`]).
//!
//! All sampling is keyed by explicit 64-bit seeds through a counter-based
//! generator ([`rng`]), making every estimate replayable and independent
//! of worker count.

mod dd;
mod quad;
mod union_find;

pub mod enumeration;
pub mod formulas;
pub mod geometry;
pub mod lattice;
pub mod rng;
pub mod sle;
pub mod special;
pub mod stats;

pub use enumeration::{
    crossing_prob_exact, direct_crossing_measures, enumerate_partition_set, mean_crossing_exact,
    mean_crossing_product_form, EnumerationError, PartitionSet, QPolynomial, SmallGraph,
};
pub use formulas::{
    carleson_crossing, crossing_probability, kleban_crossing, mean_crossing_number, predict,
    strip_mean_crossings, x_prime_one, x_prime_one_gamma_form, CrossingPrediction, FormulaError,
    MeanCrossingNumber, UniversalConstants,
};
pub use geometry::{
    cross_ratio, rectangle_eta, rectangle_from_aspect, rectangle_from_modulus, triangle_eta,
    BoundaryPoint, BoundaryQuad, CrossRatio, GeometryError, RectangleGeometry,
};
pub use lattice::{
    run_experiment, run_trial, smirnov_h, strip_crossing_count, Arcs, CrossingStats, LatticeError,
    LatticeKind, LatticeSpec, RegionShape, SmirnovEstimate, TrialResult,
};
pub use sle::{
    estimate_left_first, simulate_race, HitResult, RaceStats, SleError, SleParams, Winner,
};
