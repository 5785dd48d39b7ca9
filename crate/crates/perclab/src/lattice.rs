//! Monte Carlo engine for critical lattice percolation.
//!
//! Supports bond percolation on the square lattice and site percolation
//! on the triangular lattice, over rectangles, equilateral triangles
//! (triangular lattice only) and periodic strips (square lattice only).
//! Each trial samples a configuration from a counter-based generator,
//! labels clusters with union-find and counts the distinct clusters that
//! touch both boundary arcs. Trial i of an experiment is keyed by
//! `derive_seed(master_seed, i)`, so results are bit-identical for every
//! worker count.

use crate::rng::{derive_seed, CounterRng};
use crate::stats::{mean_se_from_tallies, wilson_95};
use crate::union_find::UnionFind;
use serde::{Deserialize, Serialize};

const SQRT3_HALF: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    /// Bonds of the square lattice open with probability p; p_c = 1/2.
    SquareBond,
    /// Sites of the triangular lattice open with probability p; p_c = 1/2.
    TriangularSite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    Rectangle,
    EquilateralTriangle,
    PeriodicStrip,
}

/// Explicit boundary arcs as site indices into the lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arcs {
    pub gamma1: Vec<u32>,
    pub gamma2: Vec<u32>,
}

/// A percolation experiment domain: lattice kind, region shape, site
/// counts, occupation probability and boundary arcs.
///
/// `nx` and `ny` are site counts (columns and rows). For the equilateral
/// triangle `nx = ny` = side + 1 and row j holds nx - j sites. When
/// `arcs` is absent the shape default applies: left and right edges for
/// rectangles, bottom and top edges for the periodic strip, and the left
/// edge vs the right edge minus the apex for the triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    pub shape: RegionShape,
    pub nx: u32,
    pub ny: u32,
    pub p: f64,
    #[serde(default)]
    pub arcs: Option<Arcs>,
}

/// Outcome of a single sampled configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialResult {
    pub crossed: bool,
    /// Distinct clusters touching both arcs; crossed iff this is >= 1.
    pub n_crossing_clusters: u32,
}

/// Aggregated estimates over an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingStats {
    pub trials: u64,
    pub crossings: u64,
    pub p_hat: f64,
    pub p_ci_low: f64,
    pub p_ci_high: f64,
    /// Sample mean of the distinct crossing-cluster count.
    pub mean_nc: f64,
    pub se_nc: f64,
    pub master_seed: u64,
    /// Continuum aspect ratio of the region, None when degenerate or not
    /// meaningful for the shape (triangle).
    pub effective_aspect_ratio: Option<f64>,
}

/// Estimate of the triangle boundary observable at a query point snapped
/// to the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmirnovEstimate {
    pub x_requested: f64,
    /// Fraction of side BC actually covered after snapping to a whole
    /// number of lattice edges; |x_snapped - x_requested| <= 1/(2 side).
    pub x_snapped: f64,
    pub stats: CrossingStats,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("{kind:?} percolation on {shape:?} regions is not supported")]
    Unsupported {
        kind: LatticeKind,
        shape: RegionShape,
    },
    #[error("invalid lattice spec: {0}")]
    Invalid(String),
    #[error("{function}: argument {value} outside domain {domain}")]
    Domain {
        function: &'static str,
        value: f64,
        domain: &'static str,
    },
}

/// Concrete sampling graph: sites, bonds in a fixed sampling order, the
/// two boundary arcs and the continuum aspect ratio of the region.
pub(crate) struct Topology {
    pub(crate) n_sites: u32,
    /// Site-index pairs; also the order in which bond uniforms are drawn.
    pub(crate) bonds: Vec<(u32, u32)>,
    /// True for site percolation: sites open/close, bonds are adjacency.
    pub(crate) site_percolation: bool,
    pub(crate) gamma1: Vec<u32>,
    pub(crate) gamma2: Vec<u32>,
    pub(crate) effective_aspect_ratio: Option<f64>,
}

impl Topology {
    pub(crate) fn from_spec(spec: &LatticeSpec) -> Result<Topology, LatticeError> {
        if !(0.0..=1.0).contains(&spec.p) {
            return Err(LatticeError::Invalid(format!(
                "occupation probability {} outside [0, 1]",
                spec.p
            )));
        }
        if spec.nx < 1 || spec.ny < 1 {
            return Err(LatticeError::Invalid(
                "site counts must be at least 1".into(),
            ));
        }
        if spec.nx as u64 * spec.ny as u64 > u32::MAX as u64 {
            return Err(LatticeError::Invalid(format!(
                "lattice of {} x {} sites exceeds the u32 index space",
                spec.nx, spec.ny
            )));
        }
        let mut topo = match (spec.kind, spec.shape) {
            (LatticeKind::SquareBond, RegionShape::Rectangle) => square_rectangle(spec.nx, spec.ny),
            (LatticeKind::SquareBond, RegionShape::PeriodicStrip) => {
                periodic_strip(spec.nx, spec.ny)?
            }
            (LatticeKind::TriangularSite, RegionShape::Rectangle) => {
                triangular_rectangle(spec.nx, spec.ny)
            }
            (LatticeKind::TriangularSite, RegionShape::EquilateralTriangle) => {
                triangular_triangle(spec.nx, spec.ny)?
            }
            (kind, shape) => return Err(LatticeError::Unsupported { kind, shape }),
        };
        topo.site_percolation = spec.kind == LatticeKind::TriangularSite;
        if let Some(arcs) = &spec.arcs {
            validate_arcs(arcs, topo.n_sites)?;
            topo.gamma1 = arcs.gamma1.clone();
            topo.gamma2 = arcs.gamma2.clone();
        } else if topo.gamma1.iter().any(|s| topo.gamma2.contains(s)) {
            // Default edges collide only on degenerate regions (nx = 1).
            return Err(LatticeError::Invalid(
                "default boundary arcs overlap; the region is degenerate".into(),
            ));
        }
        Ok(topo)
    }
}

fn validate_arcs(arcs: &Arcs, n_sites: u32) -> Result<(), LatticeError> {
    let mut in_gamma1 = vec![false; n_sites as usize];
    for &s in &arcs.gamma1 {
        if s >= n_sites {
            return Err(LatticeError::Invalid(format!(
                "arc site {s} outside lattice of {n_sites} sites"
            )));
        }
        in_gamma1[s as usize] = true;
    }
    for &s in &arcs.gamma2 {
        if s >= n_sites {
            return Err(LatticeError::Invalid(format!(
                "arc site {s} outside lattice of {n_sites} sites"
            )));
        }
        if in_gamma1[s as usize] {
            return Err(LatticeError::Invalid(format!(
                "arcs must be disjoint; site {s} is in both"
            )));
        }
    }
    Ok(())
}

fn checked_site_count(nx: u32, ny: u32) -> u32 {
    // from_spec bounds nx * ny before building any topology.
    nx * ny
}

/// Rectangle of nx x ny sites on the square lattice, site (i, j) at
/// (i, j), index j*nx + i. Bonds: all horizontal in row-major order,
/// then all vertical. Arcs: left and right columns. The continuum
/// region spans (nx-1) x (ny-1) lattice units.
fn square_rectangle(nx: u32, ny: u32) -> Topology {
    let n_sites = checked_site_count(nx, ny);
    let site = |i: u32, j: u32| j * nx + i;
    let n_bonds = (nx as u64 - 1) * ny as u64 + nx as u64 * (ny as u64 - 1);
    let mut bonds = Vec::with_capacity(n_bonds as usize);
    for j in 0..ny {
        for i in 0..nx - 1 {
            bonds.push((site(i, j), site(i + 1, j)));
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            bonds.push((site(i, j), site(i, j + 1)));
        }
    }
    let ratio = (nx - 1) as f64 / (ny - 1) as f64;
    Topology {
        n_sites,
        bonds,
        site_percolation: false,
        gamma1: (0..ny).map(|j| site(0, j)).collect(),
        gamma2: (0..ny).map(|j| site(nx - 1, j)).collect(),
        effective_aspect_ratio: ratio.is_finite().then_some(ratio),
    }
}

/// Rectangle of nx x ny sites on the triangular lattice. Odd rows are
/// shifted right by half a unit; rows are spaced sqrt(3)/2 apart, so the
/// region has aspect ratio nx / ((ny-1) sqrt(3)/2). Arcs: left and right
/// columns.
fn triangular_rectangle(nx: u32, ny: u32) -> Topology {
    let n_sites = checked_site_count(nx, ny);
    let site = |i: u32, j: u32| j * nx + i;
    let mut bonds = Vec::new();
    for j in 0..ny {
        for i in 0..nx - 1 {
            bonds.push((site(i, j), site(i + 1, j)));
        }
        if j + 1 < ny {
            for i in 0..nx {
                // Up-neighbors at horizontal offset -1/2 and +1/2: even
                // rows sit at integer x, odd rows at integer + 1/2.
                bonds.push((site(i, j), site(i, j + 1)));
                if j % 2 == 0 {
                    if i > 0 {
                        bonds.push((site(i, j), site(i - 1, j + 1)));
                    }
                } else if i + 1 < nx {
                    bonds.push((site(i, j), site(i + 1, j + 1)));
                }
            }
        }
    }
    let ratio = nx as f64 / ((ny - 1) as f64 * SQRT3_HALF);
    Topology {
        n_sites,
        bonds,
        site_percolation: true,
        gamma1: (0..ny).map(|j| site(0, j)).collect(),
        gamma2: (0..ny).map(|j| site(nx - 1, j)).collect(),
        effective_aspect_ratio: ratio.is_finite().then_some(ratio),
    }
}

/// Equilateral triangle with side n = nx - 1 on the triangular lattice:
/// row j holds nx - j sites at x = i + j/2, y = j sqrt(3)/2. Corners:
/// A = (0, 0) bottom left, B = apex, C = bottom right. Default arcs are
/// side AB (left edge) and side BC (right edge) without the shared apex.
fn triangular_triangle(nx: u32, ny: u32) -> Result<Topology, LatticeError> {
    if nx != ny {
        return Err(LatticeError::Invalid(format!(
            "equilateral triangle needs nx = ny, got {nx} x {ny}"
        )));
    }
    if nx < 2 {
        return Err(LatticeError::Invalid(
            "equilateral triangle needs side >= 1 (nx >= 2)".into(),
        ));
    }
    let n = nx - 1;
    let mut row_start = Vec::with_capacity(ny as usize + 1);
    let mut acc = 0u32;
    for j in 0..=n {
        row_start.push(acc);
        acc += nx - j;
    }
    row_start.push(acc);
    let n_sites = acc;
    let site = |i: u32, j: u32| row_start[j as usize] + i;
    let mut bonds = Vec::new();
    for j in 0..=n {
        let row_len = nx - j;
        for i in 0..row_len {
            if i + 1 < row_len {
                bonds.push((site(i, j), site(i + 1, j)));
            }
            if j < n {
                // Row j+1 shifts right by 1/2: up-neighbors i and i-1.
                if i < row_len - 1 {
                    bonds.push((site(i, j), site(i, j + 1)));
                }
                if i > 0 {
                    bonds.push((site(i, j), site(i - 1, j + 1)));
                }
            }
        }
    }
    Ok(Topology {
        n_sites,
        bonds,
        site_percolation: true,
        gamma1: (0..=n).map(|j| site(0, j)).collect(),
        gamma2: triangle_right_arc(&row_start, n, n).1,
        effective_aspect_ratio: None,
    })
}

/// Sites of the right edge BC covering m lattice edges upward from
/// corner C, apex excluded (it belongs to side AB). Returns the snapped
/// fraction m/n and the site list.
fn triangle_right_arc(row_start: &[u32], n: u32, m: u32) -> (f64, Vec<u32>) {
    let top = if m == n { n - 1 } else { m };
    let arc = (0..=top).map(|j| row_start[j as usize] + (n - j)).collect();
    (m as f64 / n as f64, arc)
}

/// Cylinder on the square lattice: nx sites around the periodic
/// direction (circumference nx units), ny rows (height ny - 1 units).
/// Arcs: bottom and top rows.
fn periodic_strip(nx: u32, ny: u32) -> Result<Topology, LatticeError> {
    if nx < 3 {
        return Err(LatticeError::Invalid(format!(
            "periodic strip needs nx >= 3 distinct columns, got {nx}"
        )));
    }
    if ny < 2 {
        return Err(LatticeError::Invalid(format!(
            "periodic strip needs ny >= 2 rows, got {ny}"
        )));
    }
    let n_sites = checked_site_count(nx, ny);
    let site = |i: u32, j: u32| j * nx + i;
    let n_bonds = nx as u64 * ny as u64 + nx as u64 * (ny as u64 - 1);
    let mut bonds = Vec::with_capacity(n_bonds as usize);
    for j in 0..ny {
        for i in 0..nx {
            bonds.push((site(i, j), site((i + 1) % nx, j)));
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            bonds.push((site(i, j), site(i, j + 1)));
        }
    }
    Ok(Topology {
        n_sites,
        bonds,
        site_percolation: false,
        gamma1: (0..nx).map(|i| site(i, 0)).collect(),
        gamma2: (0..nx).map(|i| site(i, ny - 1)).collect(),
        effective_aspect_ratio: Some(nx as f64 / (ny - 1) as f64),
    })
}

/// Per-worker reusable trial state. Epoch stamps make arc marking O(arc
/// length) per trial without clearing whole arrays.
struct Scratch {
    uf: UnionFind,
    open: Vec<bool>,
    left_mark: Vec<u32>,
    counted: Vec<u32>,
    epoch: u32,
}

impl Scratch {
    fn new(n_sites: u32) -> Self {
        let n = n_sites as usize;
        Scratch {
            uf: UnionFind::new(n),
            open: vec![false; n],
            left_mark: vec![0; n],
            counted: vec![0; n],
            epoch: 0,
        }
    }

    fn begin_trial(&mut self) {
        if self.epoch == u32::MAX {
            self.left_mark.fill(0);
            self.counted.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.uf.reset();
    }
}

/// One sampled configuration on a prepared topology.
///
/// Uniforms are drawn unconditionally for every bond (or site) in fixed
/// topology order and compared against p, so configurations at different
/// p but equal seed are monotone-coupled: raising p only opens more.
fn trial_on_topology(
    topo: &Topology,
    p: f64,
    trial_seed: u64,
    scratch: &mut Scratch,
) -> TrialResult {
    scratch.begin_trial();
    let mut rng = CounterRng::new(trial_seed);
    if topo.site_percolation {
        for s in scratch.open.iter_mut() {
            *s = rng.next_f64() < p;
        }
        for &(a, b) in &topo.bonds {
            if scratch.open[a as usize] && scratch.open[b as usize] {
                scratch.uf.union(a, b);
            }
        }
    } else {
        for &(a, b) in &topo.bonds {
            if rng.next_f64() < p {
                scratch.uf.union(a, b);
            }
        }
    }
    // Closed sites belong to no cluster, so in site percolation only
    // open boundary sites count as touching an arc.
    let epoch = scratch.epoch;
    for &s in &topo.gamma1 {
        if !topo.site_percolation || scratch.open[s as usize] {
            let root = scratch.uf.find(s) as usize;
            scratch.left_mark[root] = epoch;
        }
    }
    let mut n_crossing = 0u32;
    for &s in &topo.gamma2 {
        if !topo.site_percolation || scratch.open[s as usize] {
            let root = scratch.uf.find(s) as usize;
            if scratch.left_mark[root] == epoch && scratch.counted[root] != epoch {
                scratch.counted[root] = epoch;
                n_crossing += 1;
            }
        }
    }
    TrialResult {
        crossed: n_crossing >= 1,
        n_crossing_clusters: n_crossing,
    }
}

/// Sample one configuration and report the crossing outcome.
///
/// Builds the topology on each call; use `run_experiment` for bulk
/// sampling with reused state.
pub fn run_trial(spec: &LatticeSpec, trial_seed: u64) -> Result<TrialResult, LatticeError> {
    let topo = Topology::from_spec(spec)?;
    let mut scratch = Scratch::new(topo.n_sites);
    Ok(trial_on_topology(&topo, spec.p, trial_seed, &mut scratch))
}

/// Exact integer tallies of an experiment chunk; merging is addition, so
/// aggregates are independent of how trials are partitioned.
#[derive(Debug, Clone, Copy, Default)]
struct Tallies {
    crossings: u64,
    sum_nc: u64,
    sum_nc_sq: u64,
}

impl Tallies {
    fn absorb(&mut self, t: TrialResult) {
        self.crossings += t.crossed as u64;
        let nc = t.n_crossing_clusters as u64;
        self.sum_nc += nc;
        self.sum_nc_sq += nc * nc;
    }

    fn merge(&mut self, other: Tallies) {
        self.crossings += other.crossings;
        self.sum_nc += other.sum_nc;
        self.sum_nc_sq += other.sum_nc_sq;
    }
}

/// Run n_trials independent configurations and aggregate crossing
/// statistics. Trial i is keyed by `derive_seed(master_seed, i)`; the
/// output is bit-identical for every worker count and across reruns.
pub fn run_experiment(
    spec: &LatticeSpec,
    n_trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<CrossingStats, LatticeError> {
    if n_trials < 1 {
        return Err(LatticeError::Invalid("n_trials must be >= 1".into()));
    }
    let topo = Topology::from_spec(spec)?;
    let tallies = sample_chunks(&topo, spec.p, n_trials, master_seed, workers);
    let (p_hat, (p_ci_low, p_ci_high)) = (
        tallies.crossings as f64 / n_trials as f64,
        wilson_95(tallies.crossings, n_trials),
    );
    let (mean_nc, se_nc) = mean_se_from_tallies(tallies.sum_nc, tallies.sum_nc_sq, n_trials);
    Ok(CrossingStats {
        trials: n_trials,
        crossings: tallies.crossings,
        p_hat,
        p_ci_low,
        p_ci_high,
        mean_nc,
        se_nc,
        master_seed,
        effective_aspect_ratio: topo.effective_aspect_ratio,
    })
}

fn sample_chunks(
    topo: &Topology,
    p: f64,
    n_trials: u64,
    master_seed: u64,
    workers: usize,
) -> Tallies {
    let workers = (workers.max(1) as u64).min(n_trials);
    let chunk = n_trials.div_ceil(workers);
    let mut total = Tallies::default();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = w * chunk;
                let hi = (lo + chunk).min(n_trials);
                scope.spawn(move || {
                    let mut scratch = Scratch::new(topo.n_sites);
                    let mut tallies = Tallies::default();
                    for i in lo..hi {
                        let seed = derive_seed(master_seed, i);
                        tallies.absorb(trial_on_topology(topo, p, seed, &mut scratch));
                    }
                    tallies
                })
            })
            .collect();
        for handle in handles {
            total.merge(handle.join().expect("worker panicked"));
        }
    });
    total
}

/// Estimate the boundary observable h(x) on the equilateral triangle:
/// the probability of an open crossing between side AB and the portion
/// XC of side BC covering the fraction x nearest corner C.
///
/// The query point snaps to a whole number of lattice edges (at most
/// half a lattice unit away); the snapped fraction is reported alongside
/// the estimate.
pub fn smirnov_h(
    spec: &LatticeSpec,
    query_x: f64,
    n_trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<SmirnovEstimate, LatticeError> {
    if spec.kind != LatticeKind::TriangularSite || spec.shape != RegionShape::EquilateralTriangle {
        return Err(LatticeError::Unsupported {
            kind: spec.kind,
            shape: spec.shape,
        });
    }
    if !(0.0..=1.0).contains(&query_x) {
        return Err(LatticeError::Domain {
            function: "smirnov_h",
            value: query_x,
            domain: "0 <= x <= 1",
        });
    }
    if spec.arcs.is_some() {
        return Err(LatticeError::Invalid(
            "smirnov_h defines its own arcs; leave spec.arcs empty".into(),
        ));
    }
    // Rebuild the right-edge arc to cover m = round(x n) edges from C.
    let base = Topology::from_spec(spec)?;
    let n = spec.nx - 1;
    let mut row_start = Vec::with_capacity(spec.ny as usize + 1);
    let mut acc = 0u32;
    for j in 0..=n {
        row_start.push(acc);
        acc += spec.nx - j;
    }
    let m = (query_x * n as f64).round() as u32;
    let (x_snapped, gamma2) = if m == 0 {
        (0.0, Vec::new())
    } else {
        triangle_right_arc(&row_start, n, m)
    };
    let arcs = Arcs {
        gamma1: base.gamma1,
        gamma2,
    };
    let probe = LatticeSpec {
        arcs: Some(arcs),
        ..spec.clone()
    };
    let stats = run_experiment(&probe, n_trials, master_seed, workers)?;
    Ok(SmirnovEstimate {
        x_requested: query_x,
        x_snapped,
        stats,
    })
}

/// Mean number of clusters crossing a periodic strip (annulus) of
/// circumference w_sites lattice units and height l_sites rows, sampled
/// at occupation probability p.
pub fn strip_crossing_count(
    l_sites: u32,
    w_sites: u32,
    p: f64,
    n_trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<CrossingStats, LatticeError> {
    let spec = LatticeSpec {
        kind: LatticeKind::SquareBond,
        shape: RegionShape::PeriodicStrip,
        nx: w_sites,
        ny: l_sites,
        p,
        arcs: None,
    };
    run_experiment(&spec, n_trials, master_seed, workers)
}
