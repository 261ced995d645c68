//! Connected graphs up to isomorphism, for small vertex counts.
//!
//! Graphs are grown one edge at a time from the empty graph; each level is
//! deduplicated by canonical form: the smallest edge bit-string over vertex
//! relabelings. Only relabelings that keep a label-invariant vertex
//! colouring sorted are searched, which keeps the minimum well defined and
//! prunes most permutations.

use std::collections::BTreeSet;

use crate::error::GraphError;

pub const MAX_VERTICES: usize = 7;

/// Simple undirected graph on `0..n`, edges with `a < b`, sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Inverse of [`Graph::key`].
    pub fn from_key(n: usize, key: u32) -> Self {
        let m = pair_order(n).len();
        let mut edges: Vec<(usize, usize)> = pair_order(n)
            .into_iter()
            .enumerate()
            .filter(|(b, _)| key >> (m - 1 - b) & 1 == 1)
            .map(|(_, e)| e)
            .collect();
        edges.sort_unstable();
        Graph { n, edges }
    }

    /// The edge bit-string read as a number, first pair most significant.
    pub fn key(&self) -> u32 {
        let identity: Vec<usize> = (0..self.n).collect();
        key_of(&self.adjacency(), &identity)
    }

    pub fn adjacency(&self) -> Vec<u32> {
        let mut adj = vec![0u32; self.n];
        for &(a, b) in &self.edges {
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        connected(&self.adjacency())
    }
}

/// Vertex pairs in bit order, column by column: (0,1), (0,2), (1,2), (0,3), ...
/// The pairs among the first `p` vertices are then a prefix.
pub fn pair_order(n: usize) -> Vec<(usize, usize)> {
    (1..n).flat_map(|j| (0..j).map(move |i| (i, j))).collect()
}

/// Key of the relabeled graph where new vertex `v` is old vertex `perm[v]`.
fn key_of(adj: &[u32], perm: &[usize]) -> u32 {
    let m = adj.len() * (adj.len() - 1) / 2;
    let mut key = 0u32;
    let mut b = 0;
    for j in 1..perm.len() {
        for i in 0..j {
            if adj[perm[i]] >> perm[j] & 1 == 1 {
                key |= 1 << (m - 1 - b);
            }
            b += 1;
        }
    }
    key
}

fn connected(adj: &[u32]) -> bool {
    let all = (1u32 << adj.len()) - 1;
    let mut seen = 1u32;
    let mut frontier = 1u32;
    while frontier != 0 {
        let mut next = 0;
        for (v, &nbrs) in adj.iter().enumerate() {
            if frontier >> v & 1 == 1 {
                next |= nbrs;
            }
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen == all
}

/// Colour = (degree, sorted neighbour degrees). Invariant under relabeling.
fn colours(adj: &[u32]) -> Vec<(u32, Vec<u32>)> {
    let deg: Vec<u32> = adj.iter().map(|a| a.count_ones()).collect();
    (0..adj.len())
        .map(|v| {
            let mut nd: Vec<u32> = (0..adj.len()).filter(|&u| adj[v] >> u & 1 == 1).map(|u| deg[u]).collect();
            nd.sort_unstable();
            (deg[v], nd)
        })
        .collect()
}

struct Search<'a> {
    adj: &'a [u32],
    colour: Vec<(u32, Vec<u32>)>,
    /// Colour required at each new position.
    slot: Vec<(u32, Vec<u32>)>,
    m: usize,
    best: u32,
}

impl Search<'_> {
    fn run(&mut self, perm: &mut Vec<usize>, used: &mut [bool], key: u32) {
        let n = self.adj.len();
        let p = perm.len();
        if p == n {
            self.best = self.best.min(key);
            return;
        }
        for v in 0..n {
            if used[v] || self.colour[v] != self.slot[p] {
                continue;
            }
            let mut next = key;
            let base = p * p.saturating_sub(1) / 2;
            for (i, &u) in perm.iter().enumerate() {
                if self.adj[u] >> v & 1 == 1 {
                    next |= 1 << (self.m - 1 - (base + i));
                }
            }
            let fixed = (p + 1) * p / 2;
            let mask = (((1u64 << fixed) - 1) << (self.m - fixed)) as u32;
            if next & mask > self.best & mask {
                continue;
            }
            perm.push(v);
            used[v] = true;
            self.run(perm, used, next);
            used[v] = false;
            perm.pop();
        }
    }
}

/// Smallest key over relabelings that keep the vertex colouring sorted.
pub fn canonical_key(adj: &[u32]) -> u32 {
    let n = adj.len();
    let colour = colours(adj);
    let mut slot = colour.clone();
    slot.sort();
    let mut search = Search {
        adj,
        colour,
        slot,
        m: n * (n - 1) / 2,
        best: u32::MAX,
    };
    search.run(&mut Vec::with_capacity(n), &mut vec![false; n], 0);
    search.best
}

/// One representative per isomorphism class of connected graphs on `n`
/// vertices, ordered by edge count, then canonical key.
pub fn enumerate_connected_graphs(n: usize) -> Result<Vec<Graph>, GraphError> {
    if !(2..=MAX_VERTICES).contains(&n) {
        return Err(GraphError::OutOfRange(n));
    }
    let pairs = pair_order(n);
    let mut level: BTreeSet<u32> = BTreeSet::from([0]);
    let mut out = Vec::new();
    for _ in 0..pairs.len() {
        let mut next = BTreeSet::new();
        for &bits in &level {
            for b in 0..pairs.len() {
                if bits >> b & 1 == 0 {
                    next.insert(canonical_key(&Graph::from_key(n, bits | 1 << b).adjacency()));
                }
            }
        }
        for &bits in &next {
            let g = Graph::from_key(n, bits);
            if g.is_connected() {
                out.push(g);
            }
        }
        level = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_canonical(adj: &[u32]) -> u32 {
        permutations(adj.len()).iter().map(|p| key_of(adj, p)).min().unwrap()
    }

    #[test]
    fn canonical_key_separates_exactly_the_isomorphism_classes() {
        // Brute-force canonical form over all n! relabelings as the oracle.
        for n in 2..=5 {
            let m = pair_order(n).len();
            let mut brute_to_fast = std::collections::BTreeMap::new();
            let mut fast_to_brute = std::collections::BTreeMap::new();
            for bits in 0..(1u32 << m) {
                let g = Graph::from_key(n, bits);
                assert_eq!(g.key(), bits);
                let adj = g.adjacency();
                let (b, f) = (brute_canonical(&adj), canonical_key(&adj));
                assert_eq!(*brute_to_fast.entry(b).or_insert(f), f, "n={n} bits={bits:b}");
                assert_eq!(*fast_to_brute.entry(f).or_insert(b), b, "n={n} bits={bits:b}");
            }
        }
    }

    #[test]
    fn small_counts() {
        let counts: Vec<usize> = (2..=4).map(|n| enumerate_connected_graphs(n).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 2, 6]);
    }

    #[test]
    fn out_of_range() {
        assert!(enumerate_connected_graphs(1).is_err());
        assert!(enumerate_connected_graphs(8).is_err());
    }
}
