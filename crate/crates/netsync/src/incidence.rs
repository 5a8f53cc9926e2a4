use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest count representable exactly in an f64.
const EXACT_INT_LIMIT: f64 = 9007199254740992.0; // 2^53

/// Edge budget for exhaustive spanning-tree enumeration.
pub const ENUMERATION_EDGE_LIMIT: usize = 24;

/// Incidence matrix and derived operators for a fixed reference vertex.
///
/// Index orders follow the graph's vertex/edge insertion order. Column e of
/// `d` holds -1 at the source and +1 at the target; `d_w` is `d` with the
/// reference row removed; `laplacian_reduced` is the matching cofactor
/// `d_w * d_w^T`.
#[derive(Debug, Clone)]
pub struct IncidenceSet {
    pub ref_vertex: usize,
    pub d: DMatrix<f64>,
    pub d_w: DMatrix<f64>,
    pub adjacency: DMatrix<f64>,
    pub degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub laplacian_reduced: DMatrix<f64>,
}

impl IncidenceSet {
    pub fn build(graph: &Graph, ref_vertex: usize) -> Result<Self> {
        let n = graph.vertex_count();
        let m = graph.edge_count();
        if ref_vertex >= n {
            return Err(Error::InvalidParameter(format!(
                "reference vertex index {ref_vertex} out of range (n = {n})"
            )));
        }
        let mut d = DMatrix::zeros(n, m);
        let mut adjacency = DMatrix::zeros(n, n);
        let mut degree = DVector::zeros(n);
        for (e, edge) in graph.edges().iter().enumerate() {
            d[(edge.source, e)] = -1.0;
            d[(edge.target, e)] = 1.0;
            adjacency[(edge.source, edge.target)] += 1.0;
            adjacency[(edge.target, edge.source)] += 1.0;
            degree[edge.source] += 1.0;
            degree[edge.target] += 1.0;
        }
        let laplacian = DMatrix::from_diagonal(&degree) - &adjacency;
        let d_w = d.clone().remove_row(ref_vertex);
        let laplacian_reduced = &d_w * d_w.transpose();
        Ok(IncidenceSet {
            ref_vertex,
            d,
            d_w,
            adjacency,
            degree,
            laplacian,
            laplacian_reduced,
        })
    }

    /// Number of spanning trees via the reduced-Laplacian determinant,
    /// with the log kept separately so large graphs do not overflow.
    pub fn spanning_tree_count(&self, graph: &Graph) -> TreeCount {
        if !graph.is_connected() {
            return TreeCount { value: 0.0, ln: f64::NEG_INFINITY };
        }
        if self.laplacian_reduced.nrows() == 0 {
            return TreeCount { value: 1.0, ln: 0.0 };
        }
        let ln = match self.laplacian_reduced.clone().cholesky() {
            Some(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>(),
            // Connected graphs have SPD cofactors; keep an LU escape hatch
            // for conditioning extremes.
            None => self.laplacian_reduced.determinant().max(0.0).ln(),
        };
        let raw = ln.exp();
        let value = if raw < EXACT_INT_LIMIT { raw.round() } else { raw };
        TreeCount { value, ln }
    }

    /// Sum over spanning trees of the product of edge weights, evaluated as
    /// det(D_W diag(w) D_W^T).
    pub fn weighted_tree_sum(&self, weights: &[f64]) -> Result<f64> {
        let m = self.d.ncols();
        if weights.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} edges",
                weights.len(),
                m
            )));
        }
        let mut scaled = self.d_w.clone();
        for (e, &w) in weights.iter().enumerate() {
            scaled.column_mut(e).scale_mut(w);
        }
        Ok((scaled * self.d_w.transpose()).determinant())
    }

    /// All spanning trees as sorted edge-index sets, lexicographic order.
    /// Guarded by `ENUMERATION_EDGE_LIMIT`.
    pub fn enumerate_spanning_trees(&self, graph: &Graph) -> Result<Vec<Vec<usize>>> {
        let n = graph.vertex_count();
        let m = graph.edge_count();
        if m > ENUMERATION_EDGE_LIMIT {
            return Err(Error::TooLarge(format!(
                "m = {m} exceeds the enumeration limit {ENUMERATION_EDGE_LIMIT}"
            )));
        }
        if n == 1 {
            return Ok(vec![Vec::new()]);
        }
        let k = n - 1;
        if k > m || !graph.is_connected() {
            return Ok(Vec::new());
        }
        let mut trees = Vec::new();
        let mut subset: Vec<usize> = (0..k).collect();
        loop {
            if spans(graph, &subset) {
                trees.push(subset.clone());
            }
            // Next k-combination of 0..m in lexicographic order.
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(trees);
                }
                i -= 1;
                if subset[i] != i + m - k {
                    break;
                }
            }
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
        }
    }

    /// Sign det(D_WS D_WS'^T) in {-1, +1} for two spanning trees S, S'.
    pub fn tree_pair_sign(&self, s: &[usize], s2: &[usize], graph: &Graph) -> Result<f64> {
        for (name, t) in [("first", s), ("second", s2)] {
            if !is_spanning_tree(graph, t) {
                return Err(Error::InvalidParameter(format!(
                    "{name} edge set is not a spanning tree"
                )));
            }
        }
        let det = (self.d_w.clone().select_columns(s)
            * self.d_w.clone().select_columns(s2).transpose())
        .determinant();
        if (det.abs() - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "spanning-tree pair determinant {det} is not +-1"
            )));
        }
        Ok(det.signum())
    }

    /// Orthogonal projector onto the cocycle space Im(D^T), as
    /// D_W^T (D_W D_W^T)^-1 D_W.
    pub fn cocycle_projector(&self, graph: &Graph) -> Result<DMatrix<f64>> {
        if !graph.is_connected() {
            return Err(Error::Disconnected(
                "cocycle projector needs a connected graph".into(),
            ));
        }
        let ch = self
            .laplacian_reduced
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Disconnected("reduced Laplacian is singular".into()))?;
        let solved = ch.solve(&self.d_w);
        Ok(self.d_w.transpose() * solved)
    }
}

/// Spanning-tree count with an overflow-safe natural log companion.
/// `value` is rounded to the exact integer whenever it fits in 2^53.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeCount {
    pub value: f64,
    pub ln: f64,
}

/// Dimension of the cycle space: m - n + (number of components).
pub fn cycle_rank(graph: &Graph) -> usize {
    graph.edge_count() + graph.connected_components() - graph.vertex_count()
}

fn spans(graph: &Graph, edges: &[usize]) -> bool {
    let n = graph.vertex_count();
    let mut uf = UnionFind::new(n);
    for &e in edges {
        let edge = &graph.edges()[e];
        if !uf.union(edge.source, edge.target) {
            return false;
        }
    }
    edges.len() == n - 1
}

fn is_spanning_tree(graph: &Graph, edges: &[usize]) -> bool {
    let m = graph.edge_count();
    if edges.len() != graph.vertex_count() - 1 {
        return false;
    }
    let mut seen = std::collections::HashSet::new();
    if edges.iter().any(|&e| e >= m || !seen.insert(e)) {
        return false;
    }
    spans(graph, edges)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Fundamental cycles of a BFS spanning tree rooted at `root`. Each vector
/// has integer entries in {-1, 0, +1}, one per edge, and lies in ker D.
#[derive(Debug, Clone)]
pub struct CycleBasis {
    pub root: usize,
    pub tree_edges: Vec<usize>,
    pub non_tree_edges: Vec<usize>,
    pub vectors: Vec<Vec<i32>>,
}

impl CycleBasis {
    pub fn build(graph: &Graph, root: usize) -> Result<Self> {
        let n = graph.vertex_count();
        if root >= n {
            return Err(Error::InvalidParameter(format!(
                "root index {root} out of range (n = {n})"
            )));
        }
        if !graph.is_connected() {
            return Err(Error::Disconnected("cycle basis needs a connected graph".into()));
        }
        let m = graph.edge_count();
        // parent[v] = (parent vertex, tree edge, edge points into v).
        let mut parent: Vec<Option<(usize, usize, bool)>> = vec![None; n];
        let mut depth = vec![0usize; n];
        let mut in_tree = vec![false; m];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut tree_edges = Vec::with_capacity(n - 1);
        while let Some(v) = queue.pop_front() {
            for end in graph.incident(v) {
                if !seen[end.neighbor] {
                    seen[end.neighbor] = true;
                    parent[end.neighbor] = Some((v, end.edge, !end.inward));
                    depth[end.neighbor] = depth[v] + 1;
                    in_tree[end.edge] = true;
                    tree_edges.push(end.edge);
                    queue.push_back(end.neighbor);
                }
            }
        }
        tree_edges.sort_unstable();
        let mut non_tree_edges = Vec::new();
        let mut vectors = Vec::new();
        for (e, edge) in graph.edges().iter().enumerate() {
            if in_tree[e] {
                continue;
            }
            non_tree_edges.push(e);
            let mut z = vec![0i32; m];
            z[e] = 1;
            // Close the cycle with the tree path target -> source: climb both
            // endpoints to their common ancestor. A tree edge traversed
            // against its orientation while walking target-side up gets +1.
            let (mut a, mut b) = (edge.target, edge.source);
            while depth[a] > depth[b] {
                let (p, f, into_a) = parent[a].unwrap();
                z[f] += if into_a { -1 } else { 1 };
                a = p;
            }
            while depth[b] > depth[a] {
                let (p, f, into_b) = parent[b].unwrap();
                z[f] += if into_b { 1 } else { -1 };
                b = p;
            }
            while a != b {
                let (pa, fa, into_a) = parent[a].unwrap();
                z[fa] += if into_a { -1 } else { 1 };
                a = pa;
                let (pb, fb, into_b) = parent[b].unwrap();
                z[fb] += if into_b { 1 } else { -1 };
                b = pb;
            }
            vectors.push(z);
        }
        Ok(CycleBasis { root, tree_edges, non_tree_edges, vectors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> Graph {
        Graph::from_parts(
            vec!["v1", "v2", "v3"],
            vec![("e1", "v1", "v2"), ("e2", "v2", "v3"), ("e3", "v1", "v3")],
        )
        .unwrap()
    }

    /// Independent count oracle: deletion-contraction on an edge multiset.
    fn tree_count_oracle(n: usize, edges: &[(usize, usize)]) -> u128 {
        fn rec(n: usize, edges: &mut Vec<(usize, usize)>) -> u128 {
            let Some((u, v)) = edges.iter().copied().find(|&(a, b)| a != b) else {
                return if n <= 1 { 1 } else { 0 };
            };
            let pos = edges.iter().position(|&p| p == (u, v)).unwrap();
            edges.remove(pos);
            let deleted = rec(n, edges);
            // Contract v into u; relabel the last vertex to v's slot.
            let mut contracted: Vec<(usize, usize)> = edges
                .iter()
                .map(|&(a, b)| {
                    let f = |x: usize| if x == v { u } else { x };
                    (f(a), f(b))
                })
                .filter(|&(a, b)| a != b)
                .map(|(a, b)| {
                    let g = |x: usize| if x == n - 1 { v } else { x };
                    (g(a), g(b))
                })
                .collect();
            let merged = rec(n - 1, &mut contracted);
            edges.insert(pos, (u, v));
            deleted + merged
        }
        let mut work: Vec<(usize, usize)> = edges.to_vec();
        if n == 0 {
            return 0;
        }
        rec(n, &mut work)
    }

    fn graph_pairs(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().iter().map(|e| (e.source, e.target)).collect()
    }

    #[test]
    fn single_edge_incidence() {
        let g = Graph::from_parts(vec!["v1", "v2"], vec![("e1", "v1", "v2")]).unwrap();
        let inc = IncidenceSet::build(&g, 0).unwrap();
        assert_eq!(inc.d, DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]));
        assert_eq!(inc.d_w, DMatrix::from_column_slice(1, 1, &[1.0]));
        assert_eq!(inc.laplacian, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_is_incidence_gram() {
        for g in [triangle(), Graph::ring(6).unwrap(), Graph::complete(5).unwrap()] {
            let inc = IncidenceSet::build(&g, 0).unwrap();
            let gram = &inc.d * inc.d.transpose();
            assert_relative_eq!(gram, inc.laplacian, epsilon = 1e-12);
            for e in 0..g.edge_count() {
                assert_eq!(inc.d.column(e).sum(), 0.0);
            }
        }
    }

    #[test]
    fn tree_counts_match_known_values() {
        let cases: Vec<(Graph, f64)> = vec![
            (triangle(), 3.0),
            (Graph::complete(4).unwrap(), 16.0),
            (Graph::ring(5).unwrap(), 5.0),
            (Graph::path(7).unwrap(), 1.0),
            (Graph::star(6).unwrap(), 1.0),
        ];
        for (g, expected) in cases {
            let inc = IncidenceSet::build(&g, 0).unwrap();
            assert_eq!(inc.spanning_tree_count(&g).value, expected);
        }
    }

    #[test]
    fn tree_count_zero_when_disconnected() {
        let g = Graph::from_parts(vec!["a", "b", "c", "d"], vec![("e1", "a", "b"), ("e2", "c", "d")])
            .unwrap();
        let inc = IncidenceSet::build(&g, 0).unwrap();
        let tc = inc.spanning_tree_count(&g);
        assert_eq!(tc.value, 0.0);
        assert!(tc.ln.is_infinite() && tc.ln < 0.0);
    }

    #[test]
    fn tree_count_log_survives_large_graphs() {
        let g = Graph::complete(40).unwrap();
        let inc = IncidenceSet::build(&g, 0).unwrap();
        let tc = inc.spanning_tree_count(&g);
        // t(K_40) = 40^38; compare in log space.
        assert_relative_eq!(tc.ln, 38.0 * (40.0f64).ln(), max_relative = 1e-10);
    }

    #[test]
    fn enumeration_matches_determinant_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let n = rng.random_range(2..7usize);
            let max_extra = n * (n - 1) / 2 - (n - 1);
            let extra = rng.random_range(0..=max_extra);
            let g = Graph::random_connected(n, extra, &mut rng).unwrap();
            let inc = IncidenceSet::build(&g, 0).unwrap();
            let trees = inc.enumerate_spanning_trees(&g).unwrap();
            let oracle = tree_count_oracle(n, &graph_pairs(&g));
            assert_eq!(trees.len() as u128, oracle);
            assert_eq!(inc.spanning_tree_count(&g).value, oracle as f64);
            for t in &trees {
                let det = inc.d_w.clone().select_columns(t).determinant();
                assert_relative_eq!(det.abs(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn enumeration_respects_edge_limit() {
        let g = Graph::complete(8).unwrap(); // m = 28
        let inc = IncidenceSet::build(&g, 0).unwrap();
        assert!(matches!(inc.enumerate_spanning_trees(&g), Err(Error::TooLarge(_))));
    }

    #[test]
    fn weighted_tree_sum_triangle() {
        let g = triangle();
        let inc = IncidenceSet::build(&g, 0).unwrap();
        // Trees {e1,e2}, {e1,e3}, {e2,e3}: 1*2 + 1*3 + 2*3 = 11.
        assert_relative_eq!(inc.weighted_tree_sum(&[1.0, 2.0, 3.0]).unwrap(), 11.0, epsilon = 1e-9);
    }

    #[test]
    fn weighted_tree_sum_equals_enumerated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(3..7usize);
            let extra = rng.random_range(0..=(n * (n - 1) / 2 - (n - 1)).min(4));
            let g = Graph::random_connected(n, extra, &mut rng).unwrap();
            let inc = IncidenceSet::build(&g, 0).unwrap();
            let w: Vec<f64> = (0..g.edge_count()).map(|_| rng.random_range(0.2..3.0)).collect();
            let by_enum: f64 = inc
                .enumerate_spanning_trees(&g)
                .unwrap()
                .iter()
                .map(|t| t.iter().map(|&e| w[e]).product::<f64>())
                .sum();
            assert_relative_eq!(inc.weighted_tree_sum(&w).unwrap(), by_enum, max_relative = 1e-9);
        }
    }

    #[test]
    fn tree_pair_sign_is_unit_and_validates() {
        let g = triangle();
        let inc = IncidenceSet::build(&g, 0).unwrap();
        let trees = inc.enumerate_spanning_trees(&g).unwrap();
        for s in &trees {
            for s2 in &trees {
                let a = inc.tree_pair_sign(s, s2, &g).unwrap();
                assert_eq!(a.abs(), 1.0);
            }
        }
        assert!(inc.tree_pair_sign(&[0, 1, 2], &trees[0], &g).is_err());
        assert!(inc.tree_pair_sign(&[0], &trees[0], &g).is_err());
    }

    #[test]
    fn cycle_basis_triangle_and_ring() {
        let g = triangle();
        let basis = CycleBasis::build(&g, 0).unwrap();
        assert_eq!(basis.vectors.len(), 1);
        let z = &basis.vectors[0];
        // e3 closes the path e1,e2: z = (sign) * (1, 1, -1).
        let canon: Vec<i32> = if z[2] == -1 { z.clone() } else { z.iter().map(|x| -x).collect() };
        assert_eq!(canon, vec![1, 1, -1]);

        let ring = Graph::ring(4).unwrap();
        let basis = CycleBasis::build(&ring, 0).unwrap();
        assert_eq!(basis.vectors.len(), 1);
        assert_eq!(basis.vectors[0].iter().map(|x| x.abs()).sum::<i32>(), 4);
    }

    #[test]
    fn cycle_vectors_lie_in_kernel_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..30 {
            let n = rng.random_range(2..12usize);
            let extra = rng.random_range(0..=(n * (n - 1) / 2 - (n - 1)).min(8));
            let g = Graph::random_connected(n, extra, &mut rng).unwrap();
            let basis = CycleBasis::build(&g, rng.random_range(0..n)).unwrap();
            assert_eq!(basis.vectors.len(), cycle_rank(&g));
            assert_eq!(basis.tree_edges.len(), n - 1);
            for z in &basis.vectors {
                // Integer incidence-kernel check, no floating point.
                let mut net = vec![0i32; n];
                for (e, &ze) in z.iter().enumerate() {
                    let edge = &g.edges()[e];
                    net[edge.source] -= ze;
                    net[edge.target] += ze;
                }
                assert!(net.iter().all(|&x| x == 0), "cycle leaves the kernel: {z:?}");
            }
        }
    }

    #[test]
    fn cocycle_projector_triangle_closed_form() {
        let g = triangle();
        let inc = IncidenceSet::build(&g, 0).unwrap();
        let p = inc.cocycle_projector(&g).unwrap();
        // P = I - z z^T / 3 with z = (1, 1, -1).
        let z = DVector::from_column_slice(&[1.0, 1.0, -1.0]);
        let expected = DMatrix::identity(3, 3) - &z * z.transpose() / 3.0;
        assert_relative_eq!(p, expected, epsilon = 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn projector_is_idempotent_symmetric_and_kills_cycles(
            seed in 0u64..10_000,
            n in 2usize..9,
            extra in 0usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let extra = extra.min(n * (n - 1) / 2 - (n - 1));
            let g = Graph::random_connected(n, extra, &mut rng).unwrap();
            let inc = IncidenceSet::build(&g, 0).unwrap();
            let p = inc.cocycle_projector(&g).unwrap();
            let m = g.edge_count();
            prop_assert!((&p * &p - &p).abs().max() < 1e-8);
            prop_assert!((&p - &p.transpose()).abs().max() < 1e-10);
            // Trace equals the cocycle dimension n - 1.
            prop_assert!((p.trace() - (n as f64 - 1.0)).abs() < 1e-8);
            // P fixes rows of D^T and annihilates the cycle basis.
            let dt = inc.d.transpose();
            prop_assert!((&p * &dt - &dt).abs().max() < 1e-8);
            for z in &CycleBasis::build(&g, 0).unwrap().vectors {
                let zf = DVector::from_iterator(m, z.iter().map(|&x| x as f64));
                prop_assert!((&p * zf).abs().max() < 1e-8);
            }
        }

        #[test]
        fn cycle_rank_counts_non_tree_edges(
            seed in 0u64..10_000,
            n in 2usize..10,
            extra in 0usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let extra = extra.min(n * (n - 1) / 2 - (n - 1));
            let g = Graph::random_connected(n, extra, &mut rng).unwrap();
            prop_assert_eq!(cycle_rank(&g), extra);
        }
    }
}
