use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Directed edge between vertex indices. Orientation fixes the sign of the
/// measured difference (target minus source); it carries no other meaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub source: usize,
    pub target: usize,
}

/// One end of an edge as seen from a vertex. `inward` is true when the edge
/// points into that vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeEnd {
    pub edge: usize,
    pub neighbor: usize,
    pub inward: bool,
}

/// Finite connected-or-not multigraph with stable vertex/edge ordering.
/// Self-loops are rejected; parallel edges are allowed. The insertion order
/// of vertices and edges defines all matrix index orders.
#[derive(Debug, Clone)]
pub struct Graph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    vertex_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
    incident: Vec<Vec<EdgeEnd>>,
}

impl Graph {
    /// Builds a graph from vertex ids and (edge id, source id, target id)
    /// triples. Fails on duplicate ids, unknown endpoints, or self-loops.
    pub fn from_parts<S: Into<String>>(
        vertices: Vec<S>,
        edges: Vec<(S, S, S)>,
    ) -> Result<Self> {
        let vertices: Vec<String> = vertices.into_iter().map(Into::into).collect();
        if vertices.is_empty() {
            return Err(Error::InvalidGraph("no vertices".into()));
        }
        let mut vertex_index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if vertex_index.insert(v.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate vertex id `{v}`")));
            }
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut built = Vec::with_capacity(edges.len());
        let mut incident = vec![Vec::new(); vertices.len()];
        for (id, src, tgt) in edges {
            let (id, src, tgt) = (id.into(), src.into(), tgt.into());
            let source = *vertex_index
                .get(&src)
                .ok_or_else(|| Error::UnknownVertex(src.clone()))?;
            let target = *vertex_index
                .get(&tgt)
                .ok_or_else(|| Error::UnknownVertex(tgt.clone()))?;
            if source == target {
                return Err(Error::InvalidGraph(format!("self-loop on `{src}` (edge `{id}`)")));
            }
            let e = built.len();
            if edge_index.insert(id.clone(), e).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate edge id `{id}`")));
            }
            incident[source].push(EdgeEnd { edge: e, neighbor: target, inward: false });
            incident[target].push(EdgeEnd { edge: e, neighbor: source, inward: true });
            built.push(Edge { id, source, target });
        }
        Ok(Graph { vertices, edges: built, vertex_index, edge_index, incident })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_id(&self, v: usize) -> &str {
        &self.vertices[v]
    }

    pub fn vertex(&self, id: &str) -> Result<usize> {
        self.vertex_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.into()))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: &str) -> Result<usize> {
        self.edge_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownEdge(id.into()))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    /// Incident edge ends of `v`, in edge insertion order per vertex.
    pub fn incident(&self, v: usize) -> &[EdgeEnd] {
        &self.incident[v]
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for end in &self.incident[v] {
                if !seen[end.neighbor] {
                    seen[end.neighbor] = true;
                    count += 1;
                    queue.push_back(end.neighbor);
                }
            }
        }
        count == n
    }

    pub fn connected_components(&self) -> usize {
        let n = self.vertex_count();
        let mut comp = vec![usize::MAX; n];
        let mut k = 0;
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = k;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for end in &self.incident[v] {
                    if comp[end.neighbor] == usize::MAX {
                        comp[end.neighbor] = k;
                        queue.push_back(end.neighbor);
                    }
                }
            }
            k += 1;
        }
        k
    }

    /// Two-coloring when the graph is bipartite, `None` otherwise.
    pub fn bipartition(&self) -> Option<Vec<bool>> {
        let n = self.vertex_count();
        let mut color: Vec<Option<bool>> = vec![None; n];
        for start in 0..n {
            if color[start].is_some() {
                continue;
            }
            color[start] = Some(false);
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                let c = color[v].unwrap();
                for end in &self.incident[v] {
                    match color[end.neighbor] {
                        None => {
                            color[end.neighbor] = Some(!c);
                            queue.push_back(end.neighbor);
                        }
                        Some(cn) if cn == c => return None,
                        Some(_) => {}
                    }
                }
            }
        }
        Some(color.into_iter().map(|c| c.unwrap()).collect())
    }

    fn generated(n: usize, pairs: Vec<(usize, usize)>) -> Self {
        let vertices: Vec<String> = (1..=n).map(|i| format!("v{i}")).collect();
        let edges: Vec<(String, String, String)> = pairs
            .into_iter()
            .enumerate()
            .map(|(k, (s, t))| (format!("e{}", k + 1), format!("v{}", s + 1), format!("v{}", t + 1)))
            .collect();
        Self::from_parts(vertices, edges).expect("generated graph is valid")
    }

    /// Path v1 - v2 - ... - vn.
    pub fn path(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("path needs n >= 1".into()));
        }
        Ok(Self::generated(n, (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect()))
    }

    /// Cycle v1 - v2 - ... - vn - v1.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter("ring needs n >= 3".into()));
        }
        let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        pairs.push((n - 1, 0));
        Ok(Self::generated(n, pairs))
    }

    /// Complete graph on n vertices, edges listed in lexicographic order.
    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("complete graph needs n >= 1".into()));
        }
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }
        Ok(Self::generated(n, pairs))
    }

    /// Star with center v1 and n-1 leaves.
    pub fn star(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("star needs n >= 2".into()));
        }
        Ok(Self::generated(n, (1..n).map(|i| (0, i)).collect()))
    }

    /// Uniform random spanning tree (Pruefer decode) plus `extra` distinct
    /// non-tree edges. The result is always connected and simple.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra: usize, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("random connected graph needs n >= 2".into()));
        }
        let max_extra = n * (n - 1) / 2 - (n - 1);
        if extra > max_extra {
            return Err(Error::InvalidParameter(format!(
                "extra = {extra} exceeds the {max_extra} available non-tree edges"
            )));
        }
        let mut pairs = if n == 2 {
            vec![(0usize, 1usize)]
        } else {
            let pruefer: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
            decode_pruefer(&pruefer)
        };
        pairs.iter_mut().for_each(|p| {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
        });
        let present: std::collections::HashSet<(usize, usize)> = pairs.iter().copied().collect();
        let mut missing: Vec<(usize, usize)> = Vec::with_capacity(max_extra);
        for i in 0..n {
            for j in i + 1..n {
                if !present.contains(&(i, j)) {
                    missing.push((i, j));
                }
            }
        }
        for pick in rand::seq::index::sample(rng, missing.len(), extra) {
            pairs.push(missing[pick]);
        }
        Ok(Self::generated(n, pairs))
    }
}

/// Standard Pruefer sequence decode; uniform over labeled trees when the
/// sequence entries are uniform.
fn decode_pruefer(seq: &[usize]) -> Vec<(usize, usize)> {
    let n = seq.len() + 2;
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut pairs = Vec::with_capacity(n - 1);
    // Min-ordered leaf extraction keeps the decode canonical.
    let mut leaves: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = (0..n)
        .filter(|&v| degree[v] == 1)
        .map(std::cmp::Reverse)
        .collect();
    for &s in seq {
        let std::cmp::Reverse(leaf) = leaves.pop().expect("pruefer decode leaf pool");
        pairs.push((leaf, s));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.push(std::cmp::Reverse(s));
        }
    }
    let std::cmp::Reverse(a) = leaves.pop().unwrap();
    let std::cmp::Reverse(b) = leaves.pop().unwrap();
    pairs.push((a, b));
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_self_loops_and_duplicates() {
        let err = Graph::from_parts(vec!["a", "b"], vec![("e1", "a", "a")]);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
        let err = Graph::from_parts(vec!["a", "a"], vec![]);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
        let err = Graph::from_parts(vec!["a", "b"], vec![("e1", "a", "b"), ("e1", "b", "a")]);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
        let err = Graph::from_parts(vec!["a"], vec![("e1", "a", "c")]);
        assert!(matches!(err, Err(Error::UnknownVertex(_))));
    }

    #[test]
    fn parallel_edges_are_allowed() {
        let g = Graph::from_parts(vec!["a", "b"], vec![("e1", "a", "b"), ("e2", "a", "b")]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degree(0), 2);
    }

    #[test]
    fn generators_have_expected_shapes() {
        let p = Graph::path(4).unwrap();
        assert_eq!((p.vertex_count(), p.edge_count()), (4, 3));
        let r = Graph::ring(5).unwrap();
        assert_eq!((r.vertex_count(), r.edge_count()), (5, 5));
        assert!(r.is_connected());
        let k = Graph::complete(5).unwrap();
        assert_eq!(k.edge_count(), 10);
        let s = Graph::star(6).unwrap();
        assert_eq!(s.degree(0), 5);
        assert!(s.bipartition().is_some());
        assert!(Graph::ring(5).unwrap().bipartition().is_none());
        assert!(Graph::ring(6).unwrap().bipartition().is_some());
    }

    #[test]
    fn incident_lists_match_edge_table() {
        let g = Graph::ring(4).unwrap();
        for v in 0..4 {
            for end in g.incident(v) {
                let e = &g.edges()[end.edge];
                if end.inward {
                    assert_eq!(e.target, v);
                    assert_eq!(e.source, end.neighbor);
                } else {
                    assert_eq!(e.source, v);
                    assert_eq!(e.target, end.neighbor);
                }
            }
        }
    }

    #[test]
    fn random_connected_is_connected_simple_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(2..40);
            let max_extra = n * (n - 1) / 2 - (n - 1);
            let extra = rng.random_range(0..=max_extra.min(20));
            let g = Graph::random_connected(n, extra, &mut rng).unwrap();
            assert_eq!(g.vertex_count(), n);
            assert_eq!(g.edge_count(), n - 1 + extra);
            assert!(g.is_connected());
            let mut seen = std::collections::HashSet::new();
            for e in g.edges() {
                let key = (e.source.min(e.target), e.source.max(e.target));
                assert!(seen.insert(key), "duplicate pair in generated graph");
            }
        }
    }

    #[test]
    fn random_connected_is_reproducible() {
        let a = Graph::random_connected(31, 15, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = Graph::random_connected(31, 15, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let pairs = |g: &Graph| g.edges().iter().map(|e| (e.source, e.target)).collect::<Vec<_>>();
        assert_eq!(pairs(&a), pairs(&b));
    }

    #[test]
    fn pruefer_decode_star_and_path() {
        // Sequence of all-c decodes to the star centered at c.
        let pairs = decode_pruefer(&[3, 3, 3]);
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().filter(|p| p.0 == 3 || p.1 == 3).count() == 4);
        // n = 2: empty sequence handled by caller; n = 3 single entry.
        let pairs = decode_pruefer(&[1]);
        assert_eq!(pairs.len(), 2);
    }
}
