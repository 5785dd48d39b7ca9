//! Exact random-cluster partition functions on small graphs by complete
//! enumeration of bond subsets.
//!
//! For a graph with B bonds, arcs gamma1 and gamma2 and occupation
//! probability p, every subset C of open bonds carries weight
//! p^|C| (1-p)^(B-|C|), and its clusters are classified by arc contact:
//! N_c touch both arcs, N_L only gamma1, N_R only gamma2, N_0 neither.
//! The five partition functions are polynomials in the cluster fugacity:
//!
//!   Z_ff = <Q^(N_c+N_L+N_R+N_0)>   Z_aa = <Q^(N_0)>
//!   Z_af = <Q^(N_R+N_0)>           Z_fa = <Q^(N_L+N_0)>
//!   Z_ab = <Q^(N_0) ; N_c = 0>
//!
//! whence P_cross = Z_aa(1) - Z_ab(1) and
//! E[N_c] = d/dQ (Z_ff + Z_aa - Z_fa - Z_af) at Q = 1.
//!
//! Weights accumulate in double-double arithmetic with the complement
//! 1 - p carried error-free, so each coefficient is the correctly
//! rounded value of the exact dyadic-rational sum. Probability totals
//! such as Z_aa(1) then evaluate to exactly 1.0.

use crate::dd::{Dd, DD_ONE, DD_ZERO};
use crate::lattice::{LatticeKind, LatticeSpec, Topology};
use crate::union_find::UnionFind;
use serde::{Deserialize, Serialize};

/// 2^B subsets stay enumerable on a desk machine up to this bond count.
pub const ENUMERATION_BOND_CAP: usize = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumerationError {
    #[error("graph has {bonds} bonds; the enumeration cap is {ENUMERATION_BOND_CAP}")]
    CapExceeded { bonds: usize },
    #[error("invalid graph: {0}")]
    Invalid(String),
}

/// A small graph with two marked boundary arcs, the unit of exact
/// enumeration. Site indices are dense in [0, n_sites).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallGraph {
    pub n_sites: u32,
    pub bonds: Vec<(u32, u32)>,
    pub gamma1: Vec<u32>,
    pub gamma2: Vec<u32>,
}

impl SmallGraph {
    pub fn validate(&self) -> Result<(), EnumerationError> {
        if self.n_sites == 0 {
            return Err(EnumerationError::Invalid(
                "graph needs at least one site".into(),
            ));
        }
        if self.bonds.len() > ENUMERATION_BOND_CAP {
            return Err(EnumerationError::CapExceeded {
                bonds: self.bonds.len(),
            });
        }
        for &(a, b) in &self.bonds {
            if a >= self.n_sites || b >= self.n_sites {
                return Err(EnumerationError::Invalid(format!(
                    "bond ({a}, {b}) outside site range 0..{}",
                    self.n_sites
                )));
            }
            if a == b {
                return Err(EnumerationError::Invalid(format!("self-loop at site {a}")));
            }
        }
        let mut in_gamma1 = vec![false; self.n_sites as usize];
        for &s in &self.gamma1 {
            if s >= self.n_sites {
                return Err(EnumerationError::Invalid(format!(
                    "gamma1 site {s} outside site range"
                )));
            }
            in_gamma1[s as usize] = true;
        }
        for &s in &self.gamma2 {
            if s >= self.n_sites {
                return Err(EnumerationError::Invalid(format!(
                    "gamma2 site {s} outside site range"
                )));
            }
            if in_gamma1[s as usize] {
                return Err(EnumerationError::Invalid(format!(
                    "arcs must be disjoint; site {s} is in both"
                )));
            }
        }
        Ok(())
    }

    /// The sampling graph of a square-bond lattice spec, so Monte Carlo
    /// and enumeration exercise the identical topology and arcs.
    pub fn from_lattice(spec: &LatticeSpec) -> Result<SmallGraph, EnumerationError> {
        if spec.kind != LatticeKind::SquareBond {
            return Err(EnumerationError::Invalid(
                "enumeration sums over bond subsets; only square_bond specs convert".into(),
            ));
        }
        let topo =
            Topology::from_spec(spec).map_err(|e| EnumerationError::Invalid(e.to_string()))?;
        let graph = SmallGraph {
            n_sites: topo.n_sites,
            bonds: topo.bonds,
            gamma1: topo.gamma1,
            gamma2: topo.gamma2,
        };
        graph.validate()?;
        Ok(graph)
    }
}

/// Polynomial in the cluster fugacity Q with f64 coefficients indexed
/// by power, trailing zeros trimmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPolynomial {
    coeffs: Vec<f64>,
}

impl QPolynomial {
    pub fn from_coefficients(mut coeffs: Vec<f64>) -> QPolynomial {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        QPolynomial { coeffs }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluate at q with double-double compensation, rounding once at
    /// the end. Coefficient sums like Z(1) therefore return the
    /// correctly rounded value of the exact sum.
    pub fn eval(&self, q: f64) -> f64 {
        let mut acc = DD_ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = acc.mul_f64(q).add(Dd::from_f64(c));
        }
        acc.to_f64()
    }

    /// d/dQ at Q = 1: sum of j * c_j, compensated like `eval`.
    pub fn derivative_at_one(&self) -> f64 {
        let mut acc = DD_ZERO;
        for (j, &c) in self.coeffs.iter().enumerate().skip(1) {
            acc = acc.add(Dd::from_f64(c).mul_f64(j as f64));
        }
        acc.to_f64()
    }
}

/// The five partition polynomials of one graph at one p.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSet {
    pub p: f64,
    pub z_ff: QPolynomial,
    pub z_aa: QPolynomial,
    pub z_ab: QPolynomial,
    pub z_af: QPolynomial,
    pub z_fa: QPolynomial,
}

/// Cluster classification of one bond subset.
#[derive(Debug, Clone, Copy, Default)]
struct ArcCounts {
    n_c: u32,
    n_l: u32,
    n_r: u32,
    n_0: u32,
}

fn classify_subset(
    graph: &SmallGraph,
    mask: u32,
    uf: &mut UnionFind,
    touches: &mut [(bool, bool)],
) -> ArcCounts {
    uf.reset();
    for (b, &(x, y)) in graph.bonds.iter().enumerate() {
        if mask >> b & 1 == 1 {
            uf.union(x, y);
        }
    }
    touches.fill((false, false));
    for &s in &graph.gamma1 {
        touches[uf.find(s) as usize].0 = true;
    }
    for &s in &graph.gamma2 {
        touches[uf.find(s) as usize].1 = true;
    }
    let mut counts = ArcCounts::default();
    for s in 0..graph.n_sites {
        if uf.find(s) != s {
            continue; // count each cluster once, at its root
        }
        match touches[s as usize] {
            (true, true) => counts.n_c += 1,
            (true, false) => counts.n_l += 1,
            (false, true) => counts.n_r += 1,
            (false, false) => counts.n_0 += 1,
        }
    }
    counts
}

/// Subset weights p^k (1-p)^(B-k) as double-doubles with the complement
/// carried error-free, indexed by open-bond count k.
fn weight_table(p: f64, n_bonds: usize) -> Vec<Dd> {
    let q = Dd::one_minus(p);
    let mut p_pows = vec![DD_ONE; n_bonds + 1];
    let mut q_pows = vec![DD_ONE; n_bonds + 1];
    for k in 1..=n_bonds {
        p_pows[k] = p_pows[k - 1].mul_f64(p);
        q_pows[k] = q_pows[k - 1].mul(q);
    }
    (0..=n_bonds)
        .map(|k| p_pows[k].mul(q_pows[n_bonds - k]))
        .collect()
}

/// Enumerate all 2^B bond subsets and accumulate the five partition
/// polynomials. Deterministic; single-threaded (the cap keeps the sweep
/// within seconds, and one accumulation order makes results byte-stable).
pub fn enumerate_partition_set(
    graph: &SmallGraph,
    p: f64,
) -> Result<PartitionSet, EnumerationError> {
    graph.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(EnumerationError::Invalid(format!(
            "occupation probability {p} outside [0, 1]"
        )));
    }
    let n_bonds = graph.bonds.len();
    let weights = weight_table(p, n_bonds);
    let n_powers = graph.n_sites as usize + 1;
    let mut bins = vec![vec![DD_ZERO; n_powers]; 5];
    let mut uf = UnionFind::new(graph.n_sites as usize);
    let mut touches = vec![(false, false); graph.n_sites as usize];
    for mask in 0..1u64 << n_bonds {
        let mask = mask as u32;
        let c = classify_subset(graph, mask, &mut uf, &mut touches);
        let w = weights[mask.count_ones() as usize];
        let total = (c.n_c + c.n_l + c.n_r + c.n_0) as usize;
        bins[0][total] = bins[0][total].add(w);
        let n_0 = c.n_0 as usize;
        bins[1][n_0] = bins[1][n_0].add(w);
        if c.n_c == 0 {
            bins[2][n_0] = bins[2][n_0].add(w);
        }
        let af = (c.n_r + c.n_0) as usize;
        bins[3][af] = bins[3][af].add(w);
        let fa = (c.n_l + c.n_0) as usize;
        bins[4][fa] = bins[4][fa].add(w);
    }
    let mut polys = bins
        .into_iter()
        .map(|b| QPolynomial::from_coefficients(b.into_iter().map(Dd::to_f64).collect()));
    Ok(PartitionSet {
        p,
        z_ff: polys.next().unwrap(),
        z_aa: polys.next().unwrap(),
        z_ab: polys.next().unwrap(),
        z_af: polys.next().unwrap(),
        z_fa: polys.next().unwrap(),
    })
}

/// Exact crossing probability: Z_aa(1) - Z_ab(1), the total weight of
/// configurations with at least one crossing cluster.
pub fn crossing_prob_exact(pset: &PartitionSet) -> f64 {
    pset.z_aa.eval(1.0) - pset.z_ab.eval(1.0)
}

/// Exact mean number of crossing clusters from the polynomial
/// derivative: d/dQ (Z_ff + Z_aa - Z_fa - Z_af) at Q = 1.
pub fn mean_crossing_exact(pset: &PartitionSet) -> f64 {
    pset.z_ff.derivative_at_one() + pset.z_aa.derivative_at_one()
        - pset.z_fa.derivative_at_one()
        - pset.z_af.derivative_at_one()
}

/// The same mean through the logarithmic-derivative product form
/// d/dQ [Z_ff Z_aa / (Z_fa Z_af)] at Q = 1, by the quotient rule on the
/// evaluated members. Agrees with `mean_crossing_exact` because every
/// member evaluates to 1 at Q = 1.
pub fn mean_crossing_product_form(pset: &PartitionSet) -> f64 {
    let (ff, aa) = (pset.z_ff.eval(1.0), pset.z_aa.eval(1.0));
    let (fa, af) = (pset.z_fa.eval(1.0), pset.z_af.eval(1.0));
    let (dff, daa) = (pset.z_ff.derivative_at_one(), pset.z_aa.derivative_at_one());
    let (dfa, daf) = (pset.z_fa.derivative_at_one(), pset.z_af.derivative_at_one());
    let num = dff * aa + ff * daa;
    let den_derivative = dfa * af + fa * daf;
    (num * (fa * af) - ff * aa * den_derivative) / (fa * af * (fa * af))
}

/// Independent ground truth: direct plain-f64 sums of the crossing event
/// probability and crossing-cluster expectation over all subsets, with
/// clusters labeled by breadth-first search instead of union-find.
pub fn direct_crossing_measures(
    graph: &SmallGraph,
    p: f64,
) -> Result<(f64, f64), EnumerationError> {
    graph.validate()?;
    if !(0.0..=1.0).contains(&p) {
        return Err(EnumerationError::Invalid(format!(
            "occupation probability {p} outside [0, 1]"
        )));
    }
    let n_bonds = graph.bonds.len();
    let n = graph.n_sites as usize;
    let q = 1.0 - p;
    let weights: Vec<f64> = (0..=n_bonds)
        .map(|k| p.powi(k as i32) * q.powi((n_bonds - k) as i32))
        .collect();
    let mut p_cross = 0.0f64;
    let mut mean = 0.0f64;
    let mut component = vec![u32::MAX; n];
    let mut queue = Vec::with_capacity(n);
    let mut adjacency = vec![Vec::new(); n];
    for mask in 0..1u64 << n_bonds {
        for a in adjacency.iter_mut() {
            a.clear();
        }
        for (b, &(x, y)) in graph.bonds.iter().enumerate() {
            if mask >> b & 1 == 1 {
                adjacency[x as usize].push(y);
                adjacency[y as usize].push(x);
            }
        }
        component.fill(u32::MAX);
        let mut n_components = 0u32;
        for start in 0..n {
            if component[start] != u32::MAX {
                continue;
            }
            let id = n_components;
            n_components += 1;
            component[start] = id;
            queue.clear();
            queue.push(start as u32);
            while let Some(s) = queue.pop() {
                for &t in &adjacency[s as usize] {
                    if component[t as usize] == u32::MAX {
                        component[t as usize] = id;
                        queue.push(t);
                    }
                }
            }
        }
        let mut hits_gamma1 = vec![false; n_components as usize];
        for &s in &graph.gamma1 {
            hits_gamma1[component[s as usize] as usize] = true;
        }
        let mut counted = vec![false; n_components as usize];
        let mut n_c = 0u32;
        for &s in &graph.gamma2 {
            let id = component[s as usize] as usize;
            if hits_gamma1[id] && !counted[id] {
                counted[id] = true;
                n_c += 1;
            }
        }
        let w = weights[mask.count_ones() as usize];
        if n_c >= 1 {
            p_cross += w;
        }
        mean += w * n_c as f64;
    }
    Ok((p_cross, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::RegionShape;

    fn single_bond() -> SmallGraph {
        SmallGraph {
            n_sites: 2,
            bonds: vec![(0, 1)],
            gamma1: vec![0],
            gamma2: vec![1],
        }
    }

    fn twelve_bond_rectangle() -> SmallGraph {
        SmallGraph::from_lattice(&LatticeSpec {
            kind: LatticeKind::SquareBond,
            shape: RegionShape::Rectangle,
            nx: 3,
            ny: 3,
            p: 0.5,
            arcs: None,
        })
        .unwrap()
    }

    fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
        assert!(
            (actual - expected).abs() <= tol,
            "{what}: got {actual}, want {expected} (err {:e})",
            (actual - expected).abs()
        );
    }

    #[test]
    fn polynomial_eval_and_derivative() {
        let poly = QPolynomial::from_coefficients(vec![1.0, 2.0, 3.0, 0.0]);
        assert_eq!(poly.degree(), 2);
        assert_eq!(poly.eval(2.0), 17.0);
        assert_eq!(poly.eval(0.0), 1.0);
        assert_eq!(poly.derivative_at_one(), 8.0);
    }

    #[test]
    fn single_bond_closed_forms() {
        for p in [0.3, 0.5, 0.7] {
            let pset = enumerate_partition_set(&single_bond(), p).unwrap();
            // Z_ff = p Q + (1-p) Q^2, Z_aa = 1, Z_af = Z_fa = p + (1-p) Q,
            // Z_ab = 1 - p.
            assert_eq!(pset.z_ff.coefficients(), &[0.0, p, 1.0 - p]);
            assert_eq!(pset.z_aa.coefficients(), &[1.0]);
            assert_eq!(pset.z_af.coefficients(), &[p, 1.0 - p]);
            assert_eq!(pset.z_fa.coefficients(), &[p, 1.0 - p]);
            assert_eq!(pset.z_ab.coefficients(), &[1.0 - p]);
            assert_close(crossing_prob_exact(&pset), p, 1e-15, "single-bond P");
            assert_close(mean_crossing_exact(&pset), p, 1e-14, "single-bond mean");
        }
    }

    #[test]
    fn lone_free_site_weights() {
        let graph = SmallGraph {
            n_sites: 1,
            bonds: vec![],
            gamma1: vec![0],
            gamma2: vec![],
        };
        let pset = enumerate_partition_set(&graph, 0.4).unwrap();
        assert_eq!(pset.z_ff.coefficients(), &[0.0, 1.0]);
        assert_eq!(pset.z_aa.coefficients(), &[1.0]);
        assert_eq!(crossing_prob_exact(&pset), 0.0);
    }

    #[test]
    fn partition_sums_are_exactly_one_at_q1() {
        for p in [0.3, 0.5, 0.7] {
            for graph in [single_bond(), twelve_bond_rectangle()] {
                let pset = enumerate_partition_set(&graph, p).unwrap();
                assert_eq!(pset.z_ff.eval(1.0), 1.0, "Z_ff(1) at p={p}");
                assert_eq!(pset.z_aa.eval(1.0), 1.0, "Z_aa(1) at p={p}");
                assert_eq!(pset.z_af.eval(1.0), 1.0, "Z_af(1) at p={p}");
                assert_eq!(pset.z_fa.eval(1.0), 1.0, "Z_fa(1) at p={p}");
            }
        }
    }

    #[test]
    fn twelve_bond_reference_values() {
        // Exact dyadic-rational ground truth for the 3x3-site rectangle.
        let expected = [
            (0.3, 0.296_808_839_999_999_96, 0.309_770_693_037),
            (0.5, 0.671_875, 0.710_205_078_125),
            (0.7, 0.925_137_64, 0.952_587_401_436_999_9),
        ];
        let graph = twelve_bond_rectangle();
        for (p, p_cross, mean) in expected {
            let pset = enumerate_partition_set(&graph, p).unwrap();
            assert_close(crossing_prob_exact(&pset), p_cross, 1e-15, "12-bond P");
            assert_close(mean_crossing_exact(&pset), mean, 1e-14, "12-bond mean");
        }
    }

    #[test]
    fn derivative_form_matches_direct_and_product_forms() {
        let graphs = [single_bond(), twelve_bond_rectangle()];
        for graph in &graphs {
            for p in [0.3, 0.5, 0.7] {
                let pset = enumerate_partition_set(graph, p).unwrap();
                let (p_direct, mean_direct) = direct_crossing_measures(graph, p).unwrap();
                assert_close(
                    crossing_prob_exact(&pset),
                    p_direct,
                    1e-12,
                    "P vs direct event sum",
                );
                assert_close(
                    mean_crossing_exact(&pset),
                    mean_direct,
                    1e-12,
                    "mean vs direct expectation",
                );
                assert_close(
                    mean_crossing_product_form(&pset),
                    mean_crossing_exact(&pset),
                    1e-12,
                    "product vs sum form",
                );
            }
        }
    }

    #[test]
    fn no_path_graph_never_crosses() {
        let graph = SmallGraph {
            n_sites: 4,
            bonds: vec![(0, 1), (2, 3)],
            gamma1: vec![0, 1],
            gamma2: vec![2, 3],
        };
        let pset = enumerate_partition_set(&graph, 0.6).unwrap();
        assert_eq!(crossing_prob_exact(&pset), 0.0);
        assert_eq!(mean_crossing_exact(&pset), 0.0);
        assert_eq!(pset.z_aa, pset.z_ab);
    }

    #[test]
    fn extreme_probabilities() {
        let graph = twelve_bond_rectangle();
        let closed = enumerate_partition_set(&graph, 0.0).unwrap();
        assert_eq!(crossing_prob_exact(&closed), 0.0);
        let open = enumerate_partition_set(&graph, 1.0).unwrap();
        assert_eq!(crossing_prob_exact(&open), 1.0);
        assert_eq!(mean_crossing_exact(&open), 1.0);
    }

    #[test]
    fn crossing_probability_is_monotone_in_p() {
        let graph = twelve_bond_rectangle();
        let mut prev = 0.0;
        for k in 1..=9 {
            let p = k as f64 / 10.0;
            let pset = enumerate_partition_set(&graph, p).unwrap();
            let value = crossing_prob_exact(&pset);
            assert!(value > prev, "P must rise with p, stalled at p={p}");
            prev = value;
        }
    }

    #[test]
    fn coefficients_are_nonnegative_and_bounded_by_site_count() {
        for graph in [single_bond(), twelve_bond_rectangle()] {
            let pset = enumerate_partition_set(&graph, 0.3).unwrap();
            for poly in [&pset.z_ff, &pset.z_aa, &pset.z_ab, &pset.z_af, &pset.z_fa] {
                assert!(poly.degree() <= graph.n_sites as usize);
                assert!(poly.coefficients().iter().all(|&c| c >= 0.0));
            }
        }
    }

    #[test]
    fn validation_rejects_bad_graphs() {
        let over_cap = SmallGraph {
            n_sites: 26,
            bonds: (0..25).map(|i| (i, i + 1)).collect(),
            gamma1: vec![0],
            gamma2: vec![25],
        };
        assert!(matches!(
            enumerate_partition_set(&over_cap, 0.5),
            Err(EnumerationError::CapExceeded { bonds: 25 })
        ));
        let overlapping = SmallGraph {
            n_sites: 2,
            bonds: vec![(0, 1)],
            gamma1: vec![0],
            gamma2: vec![0],
        };
        assert!(enumerate_partition_set(&overlapping, 0.5).is_err());
        let out_of_range = SmallGraph {
            n_sites: 2,
            bonds: vec![(0, 2)],
            gamma1: vec![0],
            gamma2: vec![1],
        };
        assert!(enumerate_partition_set(&out_of_range, 0.5).is_err());
        assert!(enumerate_partition_set(&single_bond(), 1.5).is_err());
        let triangular = LatticeSpec {
            kind: LatticeKind::TriangularSite,
            shape: RegionShape::Rectangle,
            nx: 3,
            ny: 3,
            p: 0.5,
            arcs: None,
        };
        assert!(SmallGraph::from_lattice(&triangular).is_err());
    }

    #[test]
    fn graph_json_round_trip_rejects_unknown_keys() {
        let graph = single_bond();
        let json = serde_json::to_string(&graph).unwrap();
        assert_eq!(serde_json::from_str::<SmallGraph>(&json).unwrap(), graph);
        let unknown =
            r#"{"n_sites": 2, "bonds": [[0,1]], "gamma1": [0], "gamma2": [1], "extra": 5}"#;
        assert!(serde_json::from_str::<SmallGraph>(unknown).is_err());
    }
}
