//! Structure of a nonnegative matrix read as a directed graph.
//!
//! A nonzero entry `m[(i, j)]` is an arc `j -> i`: row `i` listens to column
//! `j`. Zero tests are exact. Under this convention the Frobenius normal form
//! is block *lower* triangular, with classes that feed others placed first.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::Dfs;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("decomposition covers {expected} nodes, matrix has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry ({row},{col}) = {value} is negative")]
    Negative { row: usize, col: usize, value: f64 },
}

/// Checks that `m` is square and entrywise nonnegative.
pub fn check_nonnegative_square(m: &DMatrix<f64>) -> Result<(), GraphError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    for row in 0..rows {
        for col in 0..cols {
            let value = m[(row, col)];
            if !(value >= 0.0) {
                return Err(GraphError::Negative { row, col, value });
            }
        }
    }
    Ok(())
}

/// Arc `j -> i` for every off-diagonal `m[(i, j)] != 0`.
fn digraph(m: &DMatrix<f64>) -> DiGraph<(), ()> {
    let n = m.nrows();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && m[(i, j)] != 0.0 {
                edges.push((j as u32, i as u32));
            }
        }
    }
    let mut g = DiGraph::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    g.extend_with_edges(edges);
    g
}

/// Strongly connected components of the graph of `m`. Each component is
/// sorted, and components are ordered by their smallest node.
///
/// Panics if `m` is not square.
pub fn strongly_connected_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    assert!(m.is_square(), "strongly_connected_components needs a square matrix");
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&digraph(m))
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|v| v.index()).collect();
            c.sort_unstable();
            c
        })
        .collect();
    comps.sort_unstable_by_key(|c| c[0]);
    comps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// 1x1 matrix; irreducibility is not defined.
    Scalar,
    Irreducible,
    Reducible,
}

pub fn connectivity(m: &DMatrix<f64>) -> Connectivity {
    if m.nrows() <= 1 {
        return Connectivity::Scalar;
    }
    if strongly_connected_components(m).len() == 1 {
        Connectivity::Irreducible
    } else {
        Connectivity::Reducible
    }
}

/// True iff the graph of `m` is strongly connected. A 1x1 matrix is scalar and
/// reported as `false`.
pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    connectivity(m) == Connectivity::Irreducible
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunicationClass {
    /// Position of the class in block order.
    pub index: usize,
    /// Original node indices, ascending.
    pub members: Vec<usize>,
}

impl CommunicationClass {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.members.len() == 1
    }
}

/// Reflexive, transitively closed relation `from -> to` between classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccessRelation {
    rows: Vec<Vec<bool>>,
}

impl AccessRelation {
    pub fn from_rows(rows: Vec<Vec<bool>>) -> Self {
        AccessRelation { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Whether class `to` is accessible from class `from`.
    pub fn accessible(&self, from: usize, to: usize) -> bool {
        self.rows[from][to]
    }

    /// Every class with access to `to`, itself included, ascending.
    pub fn accessing(&self, to: usize) -> Vec<usize> {
        (0..self.rows.len()).filter(|&j| self.rows[j][to]).collect()
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrobeniusDecomposition {
    /// `permutation[p]` is the original node placed at position `p`.
    pub permutation: Vec<usize>,
    pub classes: Vec<CommunicationClass>,
    pub accessibility: AccessRelation,
}

impl FrobeniusDecomposition {
    pub fn n_nodes(&self) -> usize {
        self.permutation.len()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class index of every original node.
    pub fn class_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_nodes()];
        for c in &self.classes {
            for &v in &c.members {
                out[v] = c.index;
            }
        }
        out
    }

    /// Half-open position range of each diagonal block in the permuted matrix.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.classes
            .iter()
            .map(|c| {
                let r = start..start + c.size();
                start = r.end;
                r
            })
            .collect()
    }

    /// `Pᵀ M P`: entry `(p, q)` is `m[(perm[p], perm[q])]`.
    pub fn permute(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let p = &self.permutation;
        DMatrix::from_fn(p.len(), p.len(), |a, b| m[(p[a], p[b])])
    }

    /// Inverse of [`permute`](Self::permute).
    pub fn unpermute(&self, permuted: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.permutation.len();
        let mut out = DMatrix::zeros(n, n);
        for (a, &i) in self.permutation.iter().enumerate() {
            for (b, &j) in self.permutation.iter().enumerate() {
                out[(i, j)] = permuted[(a, b)];
            }
        }
        out
    }

    /// Diagonal block `index` of the permuted matrix, in member order.
    pub fn diagonal_block(&self, m: &DMatrix<f64>, index: usize) -> DMatrix<f64> {
        let members = &self.classes[index].members;
        DMatrix::from_fn(members.len(), members.len(), |a, b| m[(members[a], members[b])])
    }
}

/// Arcs between distinct classes, as `(from, to)` pairs over class ids.
fn class_arcs(m: &DMatrix<f64>, class_of: &[usize]) -> BTreeSet<(usize, usize)> {
    let n = m.nrows();
    let mut arcs = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] != 0.0 && class_of[i] != class_of[j] {
                arcs.insert((class_of[j], class_of[i]));
            }
        }
    }
    arcs
}

fn closure(k: usize, arcs: &BTreeSet<(usize, usize)>) -> Vec<Vec<bool>> {
    let g: DiGraph<(), ()> = DiGraph::from_edges(arcs.iter().map(|&(a, b)| (a as u32, b as u32)));
    (0..k)
        .map(|start| {
            let mut seen = vec![false; k];
            seen[start] = true;
            if start < g.node_count() {
                let mut dfs = Dfs::new(&g, NodeIndex::new(start));
                while let Some(v) = dfs.next(&g) {
                    seen[v.index()] = true;
                }
            }
            seen
        })
        .collect()
}

/// Brings `m` to Frobenius normal form. Block order is a topological order of
/// the condensation; among ready classes the one holding the smallest node
/// goes first.
///
/// Panics if `m` is not square.
pub fn frobenius_form(m: &DMatrix<f64>) -> FrobeniusDecomposition {
    let components = strongly_connected_components(m);
    let k = components.len();
    let mut comp_of = vec![0; m.nrows()];
    for (c, members) in components.iter().enumerate() {
        for &v in members {
            comp_of[v] = c;
        }
    }
    let arcs = class_arcs(m, &comp_of);

    // Kahn; components are already indexed by smallest member.
    let mut indegree = vec![0usize; k];
    let mut out = vec![Vec::new(); k];
    for &(a, b) in &arcs {
        indegree[b] += 1;
        out[a].push(b);
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..k).filter(|&c| indegree[c] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(Reverse(c)) = ready.pop() {
        order.push(c);
        for &b in &out[c] {
            indegree[b] -= 1;
            if indegree[b] == 0 {
                ready.push(Reverse(b));
            }
        }
    }
    debug_assert_eq!(order.len(), k, "condensation must be acyclic");

    let classes: Vec<CommunicationClass> = order
        .iter()
        .enumerate()
        .map(|(index, &c)| CommunicationClass { index, members: components[c].clone() })
        .collect();
    let permutation = classes.iter().flat_map(|c| c.members.iter().copied()).collect();
    let mut rank = vec![0; k];
    for (pos, &c) in order.iter().enumerate() {
        rank[c] = pos;
    }
    let ranked: BTreeSet<(usize, usize)> = arcs.iter().map(|&(a, b)| (rank[a], rank[b])).collect();
    let accessibility = AccessRelation::from_rows(closure(k, &ranked));
    FrobeniusDecomposition { permutation, classes, accessibility }
}

/// Recomputes the class accessibility relation of `decomp` from `m`.
pub fn accessibility(
    decomp: &FrobeniusDecomposition,
    m: &DMatrix<f64>,
) -> Result<AccessRelation, GraphError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    if rows != decomp.n_nodes() {
        return Err(GraphError::DimensionMismatch { expected: decomp.n_nodes(), found: rows });
    }
    let class_of = decomp.class_of();
    Ok(AccessRelation::from_rows(closure(decomp.n_classes(), &class_arcs(m, &class_of))))
}
