//! Disjoint-set forest over dense u32 indices, tuned for repeated reuse
//! across Monte Carlo trials: `reset` reinitializes in place without
//! reallocating.

/// Union-find with path halving and union by size.
///
/// Indices are `u32` so the parent and size arrays stay compact; lattice
/// site counts in this crate are far below `u32::MAX`.
pub(crate) struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        assert!(n <= u32::MAX as usize, "index space must fit in u32");
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    /// Back to n singleton sets, reusing the allocations.
    pub(crate) fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i as u32;
        }
        self.size.fill(1);
    }

    pub(crate) fn find(&mut self, mut x: u32) -> u32 {
        loop {
            let p = self.parent[x as usize];
            if p == x {
                return x;
            }
            // Path halving: point x at its grandparent and step there.
            let g = self.parent[p as usize];
            self.parent[x as usize] = g;
            x = g;
        }
    }

    /// Merge the sets of a and b; true when they were distinct.
    pub(crate) fn union(&mut self, a: u32, b: u32) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        true
    }
}
