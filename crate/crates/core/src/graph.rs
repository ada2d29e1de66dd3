//! Decomposable graphs given as a perfect sequence of cliques.
//!
//! Nodes are numbered `1..=N` at the API surface ([`NodeId`]) and stored
//! zero-based. Every clique and separator is kept in ascending node order, and
//! all matrix blocks in the crate are indexed in that canonical order.
//!
//! From the clique order the graph derives
//!
//! ```text
//!   H_k = C_1 ∪ … ∪ C_k              (histories)
//!   S_k = H_{k-1} ∩ C_k,  k ≥ 2        (separators)
//!   q(k) = min { j : S_k ⊆ C_j }       (separator owner, q(k) < k)
//!   Q_j = { k : q(k) = j }             (separators owned by clique j)
//! ```

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node label in `1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(usize);

impl NodeId {
    /// Builds a node id from its 1-based label. Returns `None` for label 0.
    pub fn new(label: usize) -> Option<Self> {
        (label >= 1).then_some(NodeId(label))
    }

    pub fn label(self) -> usize {
        self.0
    }

    pub fn zero_based(self) -> usize {
        self.0 - 1
    }

    pub(crate) fn from_zero_based(i: usize) -> Self {
        NodeId(i + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A non-empty set of nodes, stored in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clique {
    members: Vec<NodeId>,
}

impl Clique {
    /// Builds a clique from node labels; members are sorted, duplicates and
    /// the label 0 are rejected.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::NodeCoverage("empty clique".into()));
        }
        let mut members = Vec::with_capacity(labels.len());
        for &l in labels {
            members.push(
                NodeId::new(l).ok_or_else(|| Error::NodeCoverage("node labels start at 1".into()))?,
            );
        }
        members.sort_unstable();
        let before = members.len();
        members.dedup();
        if members.len() != before {
            return Err(Error::NodeCoverage(format!("clique {labels:?} lists a node twice")));
        }
        Ok(Clique { members })
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    /// Accept cliques whose separator is empty (disconnected components).
    #[serde(default)]
    pub allow_empty_separators: bool,
}

/// A validated perfect sequence of cliques with all derived index sets.
///
/// Clique indices `k` are 1-based in accessor arguments, matching the usual
/// `C_1..C_K` numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposableGraph {
    n_nodes: usize,
    cliques: Vec<Vec<usize>>,
    histories: Vec<Vec<usize>>,
    // separators[k-1]; empty for k = 1
    separators: Vec<Vec<usize>>,
    // q[k-1]; 0 (unused) for k = 1
    q: Vec<usize>,
    q_sets: Vec<Vec<usize>>,
}

/// Validates a perfect sequence of cliques and derives separators, histories,
/// the q-mapping and the Q-sets.
pub fn validate_perfect_sequence(
    cliques: &[Clique],
    n_nodes: usize,
    opts: GraphOptions,
) -> Result<DecomposableGraph> {
    if cliques.is_empty() {
        return Err(Error::NodeCoverage("no cliques given".into()));
    }
    if n_nodes == 0 {
        return Err(Error::NodeCoverage("n_nodes must be at least 1".into()));
    }
    let mut covered = vec![false; n_nodes];
    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(cliques.len());
    for (i, c) in cliques.iter().enumerate() {
        if c.is_empty() {
            return Err(Error::NodeCoverage(format!("clique {} is empty", i + 1)));
        }
        let mut v = Vec::with_capacity(c.len());
        for node in c.members() {
            if node.label() > n_nodes {
                return Err(Error::NodeCoverage(format!(
                    "clique {} references node {} > N = {}",
                    i + 1,
                    node,
                    n_nodes
                )));
            }
            covered[node.zero_based()] = true;
            v.push(node.zero_based());
        }
        sets.push(v);
    }
    if let Some(missing) = covered.iter().position(|c| !c) {
        return Err(Error::NodeCoverage(format!("node {} belongs to no clique", missing + 1)));
    }

    let k_total = sets.len();
    let mut histories = Vec::with_capacity(k_total);
    let mut separators = vec![Vec::new(); k_total];
    let mut q = vec![0usize; k_total];
    let mut history: BTreeSet<usize> = BTreeSet::new();
    for (idx, clique) in sets.iter().enumerate() {
        if idx > 0 {
            let sep: Vec<usize> = clique.iter().copied().filter(|n| history.contains(n)).collect();
            if sep.is_empty() && !opts.allow_empty_separators {
                return Err(Error::EmptySeparator { k: idx + 1 });
            }
            let owner = sets[..idx]
                .iter()
                .position(|earlier| is_subset(&sep, earlier))
                .ok_or(Error::NotDecomposable { k: idx + 1 })?;
            separators[idx] = sep;
            q[idx] = owner + 1;
        }
        history.extend(clique.iter().copied());
        histories.push(history.iter().copied().collect());
    }

    let mut q_sets = vec![Vec::new(); k_total];
    for k in 2..=k_total {
        q_sets[q[k - 1] - 1].push(k);
    }

    Ok(DecomposableGraph { n_nodes, cliques: sets, histories, separators, q, q_sets })
}

// Both slices sorted ascending.
fn is_subset(small: &[usize], big: &[usize]) -> bool {
    small.iter().all(|x| big.binary_search(x).is_ok())
}

impl DecomposableGraph {
    /// Convenience constructor from 1-based label lists with default options.
    pub fn from_labels(cliques: &[Vec<usize>], n_nodes: usize) -> Result<Self> {
        Self::from_labels_with(cliques, n_nodes, GraphOptions::default())
    }

    pub fn from_labels_with(cliques: &[Vec<usize>], n_nodes: usize, opts: GraphOptions) -> Result<Self> {
        let cliques = cliques
            .iter()
            .map(|c| Clique::from_labels(c))
            .collect::<Result<Vec<_>>>()?;
        validate_perfect_sequence(&cliques, n_nodes, opts)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_cliques(&self) -> usize {
        self.cliques.len()
    }

    /// Zero-based members of clique `k` (1-based), ascending.
    pub fn clique(&self, k: usize) -> &[usize] {
        &self.cliques[k - 1]
    }

    /// Zero-based members of separator `S_k`; empty for `k = 1`.
    pub fn separator(&self, k: usize) -> &[usize] {
        &self.separators[k - 1]
    }

    /// Zero-based members of the history `H_k`.
    pub fn history(&self, k: usize) -> &[usize] {
        &self.histories[k - 1]
    }

    /// `q(k)` for `k ≥ 2`.
    pub fn q(&self, k: usize) -> usize {
        assert!(k >= 2 && k <= self.n_cliques(), "q(k) is defined for k in 2..=K");
        self.q[k - 1]
    }

    /// `Q_j`: separators assigned to clique `j`, ascending.
    pub fn q_set(&self, j: usize) -> &[usize] {
        &self.q_sets[j - 1]
    }

    /// Clique `k` as 1-based node labels.
    pub fn clique_labels(&self, k: usize) -> Vec<usize> {
        self.cliques[k - 1].iter().map(|&i| i + 1).collect()
    }

    pub fn separator_labels(&self, k: usize) -> Vec<usize> {
        self.separators[k - 1].iter().map(|&i| i + 1).collect()
    }

    pub fn clique_node_ids(&self, k: usize) -> Vec<NodeId> {
        self.cliques[k - 1].iter().map(|&i| NodeId::from_zero_based(i)).collect()
    }

    /// Positions of `S_j` inside `C_k`. Requires `S_j ⊆ C_k`.
    pub(crate) fn positions_in_clique(&self, k: usize, nodes: &[usize]) -> Vec<usize> {
        let clique = self.clique(k);
        nodes
            .iter()
            .map(|n| clique.binary_search(n).expect("node must belong to clique"))
            .collect()
    }

    /// True when nodes `i` and `j` (zero-based) share at least one clique.
    pub fn share_clique(&self, i: usize, j: usize) -> bool {
        self.cliques
            .iter()
            .any(|c| c.binary_search(&i).is_ok() && c.binary_search(&j).is_ok())
    }
}

/// Embeds a `|U|×|U|` matrix indexed by `source` into a `|V|×|V|` zero matrix
/// indexed by `target`. Both index sets are sorted ascending and `source ⊆ target`.
pub fn zero_fill(matrix: &DMatrix<f64>, source: &[usize], target: &[usize]) -> Result<DMatrix<f64>> {
    if matrix.nrows() != source.len() || matrix.ncols() != source.len() {
        return Err(Error::IndexMismatch(format!(
            "matrix is {}x{} but the source index set has {} entries",
            matrix.nrows(),
            matrix.ncols(),
            source.len()
        )));
    }
    let mut pos = Vec::with_capacity(source.len());
    for s in source {
        match target.binary_search(s) {
            Ok(p) => pos.push(p),
            Err(_) => {
                return Err(Error::IndexMismatch(format!("index {s} is not in the target set")))
            }
        }
    }
    let mut out = DMatrix::zeros(target.len(), target.len());
    for (a, &pa) in pos.iter().enumerate() {
        for (b, &pb) in pos.iter().enumerate() {
            out[(pa, pb)] = matrix[(a, b)];
        }
    }
    Ok(out)
}

/// Adds `matrix` (indexed by `source`) into `acc` (indexed by `target`) in place.
pub(crate) fn add_zero_filled(acc: &mut DMatrix<f64>, matrix: &DMatrix<f64>, positions: &[usize], scale: f64) {
    for (a, &pa) in positions.iter().enumerate() {
        for (b, &pb) in positions.iter().enumerate() {
            acc[(pa, pb)] += scale * matrix[(a, b)];
        }
    }
}

/// Chain of `n_cliques` cliques of `clique_size` nodes where consecutive
/// cliques share `separator_size` nodes.
pub fn chain_graph(n_cliques: usize, clique_size: usize, separator_size: usize) -> Result<DecomposableGraph> {
    if n_cliques == 0 || clique_size == 0 {
        return Err(Error::BadShape("chain needs K ≥ 1 and M ≥ 1".into()));
    }
    if n_cliques > 1 && (separator_size == 0 || separator_size >= clique_size) {
        return Err(Error::BadShape(format!(
            "chain separator size s = {separator_size} must satisfy 0 < s < M = {clique_size}"
        )));
    }
    let stride = clique_size - separator_size.min(clique_size);
    let cliques: Vec<Vec<usize>> = (0..n_cliques)
        .map(|k| {
            let start = k * stride + 1;
            (start..start + clique_size).collect()
        })
        .collect();
    let n = n_cliques * clique_size - (n_cliques - 1) * separator_size;
    DecomposableGraph::from_labels(&cliques, n)
}

/// Cliques arranged as a binary tree filled level by level: clique `k` has
/// parent `k / 2`. Each child attaches through `separator_size` nodes taken
/// from the parent's own (non-separator) nodes, distinct between siblings.
pub fn binary_tree_graph(n_cliques: usize, clique_size: usize, separator_size: usize) -> Result<DecomposableGraph> {
    if n_cliques == 0 || clique_size == 0 {
        return Err(Error::BadShape("tree needs K ≥ 1 and M ≥ 1".into()));
    }
    if n_cliques > 1 && (separator_size == 0 || separator_size >= clique_size) {
        return Err(Error::BadShape(format!(
            "tree separator size s = {separator_size} must satisfy 0 < s < M = {clique_size}"
        )));
    }
    // own[k-1]: labels of clique k not shared with its parent
    let mut own: Vec<Vec<usize>> = Vec::with_capacity(n_cliques);
    let mut cliques: Vec<Vec<usize>> = Vec::with_capacity(n_cliques);
    let mut next_label = 1usize;
    for k in 1..=n_cliques {
        let mut members = Vec::with_capacity(clique_size);
        if k > 1 {
            let parent = k / 2;
            let sibling = k % 2; // 0 for the left child, 1 for the right
            let pool = &own[parent - 1];
            let lo = sibling * separator_size;
            let hi = lo + separator_size;
            if hi > pool.len() {
                return Err(Error::BadShape(format!(
                    "clique {parent} has {} free nodes, not enough for {} separator nodes per child",
                    pool.len(),
                    separator_size
                )));
            }
            members.extend_from_slice(&pool[lo..hi]);
        }
        let fresh = clique_size - members.len();
        let new_nodes: Vec<usize> = (next_label..next_label + fresh).collect();
        next_label += fresh;
        members.extend_from_slice(&new_nodes);
        own.push(new_nodes);
        cliques.push(members);
    }
    DecomposableGraph::from_labels(&cliques, next_label - 1)
}
