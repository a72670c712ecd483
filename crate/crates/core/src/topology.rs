//! Communication graphs and the edge-constraint conventions built on them.
//!
//! Node ids are 0-based. For an edge `(i, j)` the constraint block
//! `A_{i|j}` is `+I` when `i < j` and `-I` otherwise, so that
//! `A_{i|j} w_i + A_{j|i} w_j = 0` forces `w_i = w_j`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::linalg::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Chain,
    Ring,
    MultiplexRing,
    Complete,
}

impl Preset {
    pub fn min_nodes(self) -> usize {
        match self {
            Preset::MultiplexRing => 5,
            // a 2-node "ring" would need a duplicate edge
            Preset::Ring => 3,
            Preset::Chain | Preset::Complete => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Chain => "chain",
            Preset::Ring => "ring",
            Preset::MultiplexRing => "multiplex-ring",
            Preset::Complete => "complete",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Preset::Chain),
            "ring" => Ok(Preset::Ring),
            "multiplex-ring" => Ok(Preset::MultiplexRing),
            "complete" | "fully-connected" => Ok(Preset::Complete),
            other => Err(Error::InvalidArgument(format!(
                "unknown topology `{other}`"
            ))),
        }
    }
}

/// An undirected, connected graph without self-loops or duplicate edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from unordered pairs, rejecting self-loops,
    /// duplicates, out-of-range ids and disconnected inputs.
    pub fn from_edges(
        n_nodes: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 nodes, got {n_nodes}"
            )));
        }
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{n_nodes}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
        }
        let mut neighbors = vec![Vec::new(); n_nodes];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let graph = Graph {
            n_nodes,
            edges: set.into_iter().collect(),
            neighbors,
        };
        if let Some(isolated) = graph.neighbors.iter().position(Vec::is_empty) {
            return Err(Error::InvalidGraph(format!("node {isolated} is isolated")));
        }
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    pub fn preset(kind: Preset, n: usize) -> Result<Self> {
        if n < kind.min_nodes() {
            return Err(Error::InvalidGraph(format!(
                "{kind} needs at least {} nodes, got {n}",
                kind.min_nodes()
            )));
        }
        let mut pairs = Vec::new();
        match kind {
            Preset::Chain => pairs.extend((0..n - 1).map(|i| (i, i + 1))),
            Preset::Ring => pairs.extend((0..n).map(|i| (i, (i + 1) % n))),
            Preset::MultiplexRing => {
                pairs.extend((0..n).map(|i| (i, (i + 1) % n)));
                pairs.extend((0..n).map(|i| (i, (i + 2) % n)));
            }
            Preset::Complete => {
                for i in 0..n {
                    pairs.extend((i + 1..n).map(|j| (i, j)));
                }
            }
        }
        Graph::from_edges(n, pairs)
    }

    /// Parses an edge list: one `i j` pair per line, `#` starts a comment.
    /// The node count is one more than the largest id mentioned.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut max_id = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                let tok = tok.ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    message: "expected two node ids".into(),
                })?;
                tok.parse::<usize>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad node id `{tok}`: {e}"),
                })
            };
            let a = parse(fields.next())?;
            let b = parse(fields.next())?;
            if fields.next().is_some() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "trailing tokens after edge".into(),
                });
            }
            max_id = max_id.max(a).max(b);
            pairs.push((a, b));
        }
        if pairs.is_empty() {
            return Err(Error::InvalidGraph("edge list is empty".into()));
        }
        let n = max_id
            .checked_add(1)
            .ok_or_else(|| Error::InvalidGraph("node id overflow".into()))?;
        // reject absurd ids before allocating per-node lists
        if n > pairs.len() + 1 {
            return Err(Error::InvalidGraph(format!(
                "node ids up to {max_id} cannot form a connected graph with {} edges",
                pairs.len()
            )));
        }
        Graph::from_edges(n, pairs)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Edges as `(lo, hi)` pairs in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        i < self.n_nodes && self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Sign of the constraint block `A_{i|j}`.
    pub fn constraint_sign(&self, i: usize, j: usize) -> Result<f64> {
        if !self.is_adjacent(i, j) {
            return Err(Error::NotAdjacent(i, j));
        }
        Ok(if i < j { 1.0 } else { -1.0 })
    }

    /// `(N_min, N_max)`.
    pub fn degree_bounds(&self) -> (usize, usize) {
        let lo = self.neighbors.iter().map(Vec::len).min().unwrap_or(0);
        let hi = self.neighbors.iter().map(Vec::len).max().unwrap_or(0);
        (lo, hi)
    }

    /// Metropolis–Hastings mixing matrix.
    pub fn mh_weights(&self) -> Matrix {
        let n = self.n_nodes;
        let mut w = Matrix::zeros(n, n);
        for &(i, j) in &self.edges {
            let v = 1.0 / (1.0 + self.degree(i).max(self.degree(j)) as f64);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        for i in 0..n {
            let off: f64 = self.neighbors[i].iter().map(|&j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
        w
    }

    /// Materializes the stacked constraint matrix `A` of size
    /// `dN x 2d|E|`. Column block `(i|j)` (ordered by `i`, then by `j` within
    /// `N_i`) holds `A_{i|j}` in row block `i`.
    pub fn constraint_matrix(&self, d: usize) -> Matrix {
        let cols = 2 * self.edges.len();
        let mut a = Matrix::zeros(d * self.n_nodes, d * cols);
        let mut col = 0;
        for i in 0..self.n_nodes {
            for &j in &self.neighbors[i] {
                let s = if i < j { 1.0 } else { -1.0 };
                for k in 0..d {
                    a[(i * d + k, col * d + k)] = s;
                }
                col += 1;
            }
        }
        a
    }

    /// Renders the graph back to the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n_nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn preset_sizes() {
        let ring = Graph::preset(Preset::Ring, 8).unwrap();
        assert_eq!(ring.edges().len(), 8);
        assert_eq!(ring.degree_bounds(), (2, 2));

        let chain = Graph::preset(Preset::Chain, 8).unwrap();
        assert_eq!(chain.edges().len(), 7);
        assert_eq!(chain.degree_bounds(), (1, 2));
        assert_eq!(chain.degree(0), 1);
        assert_eq!(chain.degree(7), 1);

        let complete = Graph::preset(Preset::Complete, 8).unwrap();
        assert_eq!(complete.edges().len(), 28);
        assert_eq!(complete.degree_bounds(), (7, 7));
    }

    #[test]
    fn multiplex_ring_matches_enumeration() {
        // hop-1 and hop-2 ring chords enumerated independently
        let n = 8;
        let mut expected = BTreeSet::new();
        for i in 0..n {
            for hop in [1, 2] {
                let j = (i + hop) % n;
                expected.insert((i.min(j), i.max(j)));
            }
        }
        let g = Graph::preset(Preset::MultiplexRing, n).unwrap();
        assert_eq!(expected.len(), 16);
        assert_eq!(g.edges().iter().cloned().collect::<BTreeSet<_>>(), expected);
        assert!((0..n).all(|i| g.degree(i) == 4));
    }

    #[test]
    fn preset_rejects_small_n() {
        assert!(Graph::preset(Preset::MultiplexRing, 4).is_err());
        assert!(Graph::preset(Preset::Chain, 1).is_err());
        assert!(Graph::preset(Preset::Complete, 1).is_err());
        assert!(Graph::preset(Preset::Chain, 2).is_ok());
        assert!("star".parse::<Preset>().is_err());
    }

    #[test]
    fn constraint_sign_convention() {
        let g = Graph::preset(Preset::Ring, 8).unwrap();
        assert_eq!(g.constraint_sign(1, 2).unwrap(), 1.0);
        assert_eq!(g.constraint_sign(2, 1).unwrap(), -1.0);
        assert!(matches!(
            g.constraint_sign(1, 3),
            Err(Error::NotAdjacent(1, 3))
        ));
    }

    #[test]
    fn sign_antisymmetry_on_presets() {
        for (kind, n) in [
            (Preset::Chain, 6),
            (Preset::Ring, 6),
            (Preset::MultiplexRing, 7),
            (Preset::Complete, 5),
        ] {
            let g = Graph::preset(kind, n).unwrap();
            for &(i, j) in g.edges() {
                assert_eq!(
                    g.constraint_sign(i, j).unwrap(),
                    -g.constraint_sign(j, i).unwrap()
                );
            }
        }
    }

    #[test]
    fn mh_weights_examples() {
        let w = Graph::preset(Preset::Ring, 8).unwrap().mh_weights();
        for i in 0..8 {
            assert!((w[(i, i)] - 1.0 / 3.0).abs() < 1e-15);
            assert!((w[(i, (i + 1) % 8)] - 1.0 / 3.0).abs() < 1e-15);
        }
        let w = Graph::preset(Preset::Chain, 2).unwrap().mh_weights();
        assert_eq!(w.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
        let w = Graph::preset(Preset::Complete, 8).unwrap().mh_weights();
        for i in 0..8 {
            for j in 0..8 {
                assert!((w[(i, j)] - 0.125).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constraint_gram_is_degree_diagonal() {
        let g = Graph::preset(Preset::Ring, 4).unwrap();
        let a = g.constraint_matrix(2);
        let gram = &a * a.transpose();
        for r in 0..8 {
            for c in 0..8 {
                let expected = if r == c { g.degree(r / 2) as f64 } else { 0.0 };
                assert_eq!(gram[(r, c)], expected);
            }
        }
        // the same holds on an irregular graph
        let g = Graph::preset(Preset::Chain, 4).unwrap();
        let a = g.constraint_matrix(2);
        let gram = &a * a.transpose();
        for r in 0..8 {
            assert_eq!(gram[(r, r)], g.degree(r / 2) as f64);
        }
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::parse_edge_list("# triangle\n0 1\n1 2  # chord\n\n2 0\n").unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(Graph::parse_edge_list(&g.to_edge_list()).unwrap(), g);

        assert!(
            Graph::parse_edge_list("0 1\n2 3\n").is_err(),
            "disconnected"
        );
        assert!(Graph::parse_edge_list("0 0\n").is_err(), "self-loop");
        assert!(Graph::parse_edge_list("0 1\n1 0\n").is_err(), "duplicate");
        assert!(matches!(
            Graph::parse_edge_list("0 x\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Graph::parse_edge_list("0 1 2\n").is_err());
        assert!(Graph::parse_edge_list("0 18446744073709551615\n").is_err());
        assert!(Graph::parse_edge_list("# nothing\n").is_err());
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (3usize..12, 0usize..4).prop_map(|(n, k)| {
            let kind = [
                Preset::Chain,
                Preset::Ring,
                Preset::MultiplexRing,
                Preset::Complete,
            ][k];
            Graph::preset(kind, n.max(kind.min_nodes())).unwrap()
        })
    }

    proptest! {
        #[test]
        fn mh_weights_doubly_stochastic(g in arb_graph()) {
            let w = g.mh_weights();
            let n = g.n_nodes();
            for i in 0..n {
                let row: f64 = (0..n).map(|j| w[(i, j)]).sum();
                prop_assert!((row - 1.0).abs() < 1e-12);
                for j in 0..n {
                    prop_assert!(w[(i, j)] >= 0.0);
                    prop_assert!((w[(i, j)] - w[(j, i)]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn undirected_invariant(g in arb_graph()) {
            for &(i, j) in g.edges() {
                prop_assert!(i < j);
                prop_assert!(g.neighbors(i).contains(&j));
                prop_assert!(g.neighbors(j).contains(&i));
            }
            let total: usize = (0..g.n_nodes()).map(|i| g.degree(i)).sum();
            prop_assert_eq!(total, 2 * g.edges().len());
        }

        #[test]
        fn edge_list_parser_never_panics(s in "[0-9 #\n]{0,64}") {
            let _ = Graph::parse_edge_list(&s);
        }
    }
}
