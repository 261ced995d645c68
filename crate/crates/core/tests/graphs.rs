use agedebt::graphs::{enumerate_connected_graphs, pair_order, Graph};

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

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

fn automorphisms(g: &Graph, perms: &[Vec<usize>]) -> u64 {
    let edges: std::collections::BTreeSet<_> = g.edges.iter().copied().collect();
    perms
        .iter()
        .filter(|p| {
            g.edges.iter().all(|&(a, b)| {
                let (x, y) = (p[a].min(p[b]), p[a].max(p[b]));
                edges.contains(&(x, y))
            })
        })
        .count() as u64
}

/// Labeled connected graphs on n vertices, by checking every edge subset.
fn labeled_connected(n: usize) -> u64 {
    let m = pair_order(n).len();
    (0..1u32 << m).filter(|&k| Graph::from_key(n, k).is_connected()).count() as u64
}

#[test]
fn orbit_sizes_cover_every_labeled_connected_graph() {
    for n in 2..=6 {
        let reps = enumerate_connected_graphs(n).unwrap();
        let perms = permutations(n);
        let covered: u64 = reps.iter().map(|g| factorial(n) / automorphisms(g, &perms)).sum();
        assert_eq!(covered, labeled_connected(n), "n={n}");
    }
}

#[test]
fn representatives_are_pairwise_non_isomorphic_and_connected() {
    for n in 2..=6 {
        let reps = enumerate_connected_graphs(n).unwrap();
        let perms = permutations(n);
        let mut forms = std::collections::BTreeSet::new();
        for g in &reps {
            assert!(g.is_connected());
            let adj = g.adjacency();
            let min = perms
                .iter()
                .map(|p| {
                    let mut inv = vec![0; n];
                    for (new, &old) in p.iter().enumerate() {
                        inv[new] = old;
                    }
                    let edges = pair_order(n).into_iter().filter(|&(i, j)| adj[inv[i]] >> inv[j] & 1 == 1).collect();
                    Graph { n, edges }.key()
                })
                .min()
                .unwrap();
            assert!(forms.insert(min), "duplicate class at n={n}");
        }
    }
}

#[test]
fn counts_and_order_are_stable() {
    let counts: Vec<usize> = (2..=6).map(|n| enumerate_connected_graphs(n).unwrap().len()).collect();
    assert_eq!(counts, vec![1, 2, 6, 21, 112]);
    assert_eq!(enumerate_connected_graphs(6).unwrap(), enumerate_connected_graphs(6).unwrap());
}

#[test]
fn seven_vertices() {
    assert_eq!(enumerate_connected_graphs(7).unwrap().len(), 853);
}
