//! Structural queries: minimal false nodes, CT non-root leaves, distances to
//! the nearest minimal false node, and the BFS-component partition.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::state::{CkpState, Label, NodeId};

/// Which leaf definition applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No errors after the start, no adversary.
    Simple,
    /// Errors with probability epsilon and an adversary.
    General,
}

/// PT nodes labeled CF together with the roots (CT nodes with a PF parent).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalFalseSet {
    pub cf_nodes: Vec<NodeId>,
    pub roots: Vec<NodeId>,
}

impl MinimalFalseSet {
    pub fn len(&self) -> usize {
        self.cf_nodes.len() + self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.cf_nodes.binary_search(&v).is_ok() || self.roots.binary_search(&v).is_ok()
    }

    /// All members in id order.
    pub fn members(&self) -> Vec<NodeId> {
        let mut all: Vec<NodeId> = self.cf_nodes.iter().chain(&self.roots).copied().collect();
        all.sort_unstable();
        all
    }
}

/// CT node with at least one PF parent.
pub fn is_root(state: &CkpState, v: NodeId) -> bool {
    state.label(v) == Label::Ct && has_pf_parent(state, v)
}

pub fn has_pf_parent(state: &CkpState, v: NodeId) -> bool {
    state.parents(v).iter().any(|&p| state.is_pf(p))
}

pub fn is_minimal_false(state: &CkpState, v: NodeId) -> bool {
    match state.label(v) {
        Label::Cf => true,
        Label::Ct => has_pf_parent(state, v),
        Label::Pf => false,
    }
}

pub fn minimal_false_set(state: &CkpState) -> MinimalFalseSet {
    let mut out = MinimalFalseSet::default();
    for n in state.nodes() {
        match n.label {
            Label::Cf => out.cf_nodes.push(n.id),
            Label::Ct if has_pf_parent(state, n.id) => out.roots.push(n.id),
            _ => {}
        }
    }
    out
}

/// Whether `v` counts as a CT non-root leaf under `mode`.
pub fn is_leaf(state: &CkpState, v: NodeId, mode: Mode) -> bool {
    if state.label(v) != Label::Ct || has_pf_parent(state, v) {
        return false;
    }
    match mode {
        Mode::Simple => state.children(v).is_empty(),
        Mode::General => state.ct_degree(v) == 0,
    }
}

pub fn ct_nonroot_leaves(state: &CkpState, mode: Mode) -> Vec<NodeId> {
    (0..state.len()).filter(|&v| is_leaf(state, v, mode)).collect()
}

/// A CT non-root leaf that carries an error. These are the leaves the
/// leaves potentials count; True leaves never affect them.
pub fn is_false_leaf(state: &CkpState, v: NodeId, mode: Mode) -> bool {
    state.is_false(v) && is_leaf(state, v, mode)
}

pub fn false_leaves(state: &CkpState, mode: Mode) -> Vec<NodeId> {
    (0..state.len()).filter(|&v| is_false_leaf(state, v, mode)).collect()
}

/// Shortest upward distance from each PT False node to a minimal false node,
/// over paths through PT nodes only. `None` for nodes outside the PT False set.
pub fn pt_false_distances(state: &CkpState) -> Vec<Option<usize>> {
    let n = state.len();
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for v in 0..n {
        if state.is_false(v) && is_minimal_false(state, v) {
            dist[v] = Some(0);
            queue.push_back(v);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &c in state.children(u) {
            if dist[c].is_none() && state.is_pt(c) && state.is_false(c) {
                dist[c] = Some(du + 1);
                queue.push_back(c);
            }
        }
    }
    dist
}

/// Anchor of each PT False node: the first minimal false node met by the
/// canonical upward BFS (FIFO, parents in insertion order, PT nodes only).
///
/// Computed in one pass over ids: a non-minimal node inherits the anchor of
/// its first parent, in insertion order, that sits one step closer to the
/// minimal false set.
pub fn bfs_component_partition(state: &CkpState) -> Vec<Option<NodeId>> {
    let dist = pt_false_distances(state);
    partition_from_distances(state, &dist)
}

pub(crate) fn partition_from_distances(state: &CkpState, dist: &[Option<usize>]) -> Vec<Option<NodeId>> {
    let mut anchor: Vec<Option<NodeId>> = vec![None; state.len()];
    for v in 0..state.len() {
        let Some(d) = dist[v] else { continue };
        if d == 0 {
            anchor[v] = Some(v);
            continue;
        }
        let via = state
            .parents(v)
            .iter()
            .find(|&&p| dist[p] == Some(d - 1))
            .expect("a node at distance d has a parent at distance d-1");
        anchor[v] = anchor[*via];
    }
    anchor
}

/// Members of each component keyed by anchor.
pub fn components(partition: &[Option<NodeId>]) -> BTreeMap<NodeId, Vec<NodeId>> {
    let mut out: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (v, a) in partition.iter().enumerate() {
        if let Some(a) = a {
            out.entry(*a).or_default().push(v);
        }
    }
    out
}

/// `anchor` together with every node reachable from it along child edges.
pub fn descendant_closure(state: &CkpState, anchor: NodeId) -> Vec<bool> {
    let mut inside = vec![false; state.len()];
    inside[anchor] = true;
    // Children always have larger ids, so one forward sweep suffices.
    for v in anchor + 1..state.len() {
        inside[v] = state.parents(v).iter().any(|&p| inside[p]);
    }
    inside
}
