//! Weighted undirected graphs on time-indexed nodes and their text exports.

use std::fmt::Write as _;
use std::io::{self, Write};

/// An undirected edge between nodes `u < v` (0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Undirected graph on `node_count` nodes; every edge is stored once with `u < v`.
///
/// Edges are kept sorted by span `v - u`, then by `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisGraph {
    node_count: usize,
    edges: Vec<Edge>,
}

impl VisGraph {
    /// Builds a graph from edges given in any orientation and order.
    ///
    /// # Panics
    ///
    /// On self-loops, duplicate pairs or endpoints outside `0..node_count`.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| {
                assert!(e.u != e.v, "self-loop at {}", e.u);
                assert!(e.u.max(e.v) < node_count, "edge endpoint out of range");
                if e.u < e.v {
                    e
                } else {
                    Edge {
                        u: e.v,
                        v: e.u,
                        weight: e.weight,
                    }
                }
            })
            .collect();
        edges.sort_by_key(|e| (e.v - e.u, e.u));
        assert!(
            edges
                .windows(2)
                .all(|w| (w[0].u, w[0].v) != (w[1].u, w[1].v)),
            "duplicate edge"
        );
        Self { node_count, edges }
    }

    pub(crate) fn from_pairs(node_count: usize, pairs: Vec<(usize, usize)>) -> Self {
        Self::from_edges(
            node_count,
            pairs.into_iter().map(|(u, v)| Edge { u, v, weight: 1.0 }),
        )
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Unordered `(u, v)` pairs, sorted lexicographically.
    pub fn pair_set(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self.edges.iter().map(|e| (e.u, e.v)).collect();
        pairs.sort_unstable();
        pairs
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().any(|e| e.u == u && e.v == v)
    }

    /// Dense symmetric adjacency (row-major, `n * n`).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.node_count;
        let mut a = vec![0.0; n * n];
        for e in &self.edges {
            a[e.u * n + e.v] = e.weight;
            a[e.v * n + e.u] = e.weight;
        }
        a
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count];
        for e in &self.edges {
            d[e.u] += 1;
            d[e.v] += 1;
        }
        d
    }

    /// One `u<TAB>v<TAB>weight` line per edge, 1-based.
    pub fn write_edge_list<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for e in &self.edges {
            writeln!(w, "{}\t{}\t{}", e.u + 1, e.v + 1, e.weight)?;
        }
        Ok(())
    }

    pub fn write_dot<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "graph G {{")?;
        for node in 1..=self.node_count {
            writeln!(w, "  {node};")?;
        }
        for e in &self.edges {
            writeln!(w, "  {} -- {} [weight={}];", e.u + 1, e.v + 1, e.weight)?;
        }
        writeln!(w, "}}")
    }

    /// Dense adjacency as CSV, one row per node.
    pub fn write_dense_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let n = self.node_count;
        let dense = self.to_dense();
        let mut line = String::new();
        for row in dense.chunks(n.max(1)).take(n) {
            line.clear();
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                write!(line, "{v}").expect("write to String");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
