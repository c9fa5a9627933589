//! Local error-checking mechanisms run on a freshly added node.
//!
//! Checks only read the state. The caller applies the returned marks in one
//! go, so every sub-check of a per-edge mechanism sees the pre-check labels.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decider::Decider;
use crate::state::{CkpState, Label, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Stringy,
    Bfs,
    ExhaustiveBfs,
    ParentwiseBfs,
    Complete,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 5] = [
        MechanismKind::Stringy,
        MechanismKind::Bfs,
        MechanismKind::ExhaustiveBfs,
        MechanismKind::ParentwiseBfs,
        MechanismKind::Complete,
    ];

    /// Mechanisms that flip one check coin per parent edge.
    pub fn is_per_edge(self) -> bool {
        matches!(self, Self::ExhaustiveBfs | Self::ParentwiseBfs | Self::Complete)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Stringy => "stringy",
            Self::Bfs => "bfs",
            Self::ExhaustiveBfs => "exhaustive-bfs",
            Self::ParentwiseBfs => "parentwise-bfs",
            Self::Complete => "complete",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| format!("unknown mechanism {s:?}; expected one of stringy, bfs, exhaustive-bfs, parentwise-bfs, complete"))
    }
}

/// A mechanism plus the per-encounter CF detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckMechanism {
    pub kind: MechanismKind,
    pub noisy_detection: f64,
}

impl CheckMechanism {
    pub fn new(kind: MechanismKind) -> Self {
        Self { kind, noisy_detection: 1.0 }
    }

    pub fn noisy(kind: MechanismKind, p_e: f64) -> Self {
        Self { kind, noisy_detection: p_e }
    }
}

/// Which visited nodes a BFS-style find condemns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkingScope {
    /// The found node and every visited node below it.
    #[default]
    Descendants,
    /// Only the BFS-tree path from the found node back to the start.
    PathOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckParams {
    pub k: usize,
    pub p: f64,
    pub p_e: f64,
    pub scope: MarkingScope,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    /// Check-coin results in the order flipped.
    pub performed: Vec<bool>,
    /// Minimal false nodes found, in order of discovery (may repeat across edges).
    pub found: Vec<NodeId>,
    /// Nodes to relabel PF, sorted and deduplicated.
    pub marked: Vec<NodeId>,
    /// Nodes examined, in order.
    pub visited: Vec<NodeId>,
}

impl CheckOutcome {
    fn finish(mut self, marked: HashSet<NodeId>) -> Self {
        self.marked = marked.into_iter().collect();
        self.marked.sort_unstable();
        self
    }

    pub fn any_performed(&self) -> bool {
        self.performed.iter().any(|&b| b)
    }
}

/// Classifies a PT node on examination. CF detection is noisy; the PF-parent
/// scan is exact and stops at the first PF parent.
fn classify<D: Decider>(state: &CkpState, u: NodeId, p_e: f64, d: &mut D) -> bool {
    if state.label(u) == Label::Cf && d.coin(p_e) {
        return true;
    }
    state.parents(u).iter().any(|&w| state.is_pf(w))
}

struct Search {
    visited: Vec<NodeId>,
    found: Vec<NodeId>,
    discovered_by: HashMap<NodeId, NodeId>,
}

/// Canonical upward BFS from `start` over PT nodes up to `max_depth` edges.
/// Stops at the first find when `stop_at_first`, otherwise keeps searching but
/// never expands a found node.
fn upward_bfs<D: Decider>(
    state: &CkpState,
    start: NodeId,
    max_depth: usize,
    p_e: f64,
    stop_at_first: bool,
    d: &mut D,
) -> Search {
    let mut search = Search { visited: Vec::new(), found: Vec::new(), discovered_by: HashMap::new() };
    if !state.is_pt(start) {
        return search;
    }
    let mut seen: HashSet<NodeId> = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((u, depth)) = queue.pop_front() {
        search.visited.push(u);
        if classify(state, u, p_e, d) {
            search.found.push(u);
            if stop_at_first {
                break;
            }
            continue;
        }
        if depth == max_depth {
            continue;
        }
        for &w in state.parents(u) {
            if state.is_pt(w) && seen.insert(w) {
                search.discovered_by.insert(w, u);
                queue.push_back((w, depth + 1));
            }
        }
    }
    search
}

/// Nodes condemned by the finds of one search.
fn condemned(state: &CkpState, search: &Search, scope: MarkingScope) -> Vec<NodeId> {
    if search.found.is_empty() {
        return Vec::new();
    }
    match scope {
        MarkingScope::Descendants => {
            let found: HashSet<NodeId> = search.found.iter().copied().collect();
            let mut order = search.visited.clone();
            order.sort_unstable();
            let mut reach: HashSet<NodeId> = HashSet::new();
            for &w in &order {
                if found.contains(&w) || state.parents(w).iter().any(|p| reach.contains(p)) {
                    reach.insert(w);
                }
            }
            let mut out: Vec<NodeId> = reach.into_iter().collect();
            out.sort_unstable();
            out
        }
        MarkingScope::PathOnly => {
            let mut out = Vec::new();
            for &f in &search.found {
                let mut cur = f;
                out.push(cur);
                while let Some(&next) = search.discovered_by.get(&cur) {
                    out.push(next);
                    cur = next;
                }
            }
            out
        }
    }
}

/// Walks one random upward path of at most `k` edges from `v`, choosing
/// uniformly among parent edges, until a detected CF or a PF node.
pub fn check_stringy<D: Decider>(state: &CkpState, v: NodeId, k: usize, p_e: f64, d: &mut D) -> CheckOutcome {
    let mut out = CheckOutcome::default();
    let mut path: Vec<NodeId> = Vec::new();
    let mut cur = v;
    for i in 0..=k {
        if state.is_pf(cur) {
            // The PF node itself keeps its label; only the walked segment is condemned.
            out.found.push(cur);
            return out.finish(path.into_iter().collect());
        }
        out.visited.push(cur);
        path.push(cur);
        if state.label(cur) == Label::Cf && d.coin(p_e) {
            out.found.push(cur);
            return out.finish(path.into_iter().collect());
        }
        let parents = state.parents(cur);
        if i == k || parents.is_empty() {
            break;
        }
        cur = parents[d.uniform(parents.len())];
    }
    out
}

/// BFS of depth `k` from `v`, condemning the first minimal false node found.
pub fn check_bfs<D: Decider>(
    state: &CkpState,
    v: NodeId,
    k: usize,
    p_e: f64,
    scope: MarkingScope,
    d: &mut D,
) -> CheckOutcome {
    let search = upward_bfs(state, v, k, p_e, true, d);
    let marked = condemned(state, &search, scope);
    let out = CheckOutcome { performed: Vec::new(), found: search.found, marked: Vec::new(), visited: search.visited };
    out.finish(marked.into_iter().collect())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PerEdge {
    StopAtFirst,
    OnePerEdge,
    Everything,
}

fn per_edge_check<D: Decider>(
    state: &CkpState,
    v: NodeId,
    parents: &[NodeId],
    params: &CheckParams,
    style: PerEdge,
    d: &mut D,
) -> CheckOutcome {
    let mut out = CheckOutcome::default();
    let mut marked: HashSet<NodeId> = HashSet::new();
    let depth = params.k.saturating_sub(1);
    for &u in parents {
        let coin = d.coin(params.p);
        out.performed.push(coin);
        if !coin {
            continue;
        }
        out.visited.push(v);
        if state.label(v) == Label::Cf && d.coin(params.p_e) {
            out.found.push(v);
            marked.insert(v);
            return out.finish(marked);
        }
        let search = upward_bfs(state, u, depth, params.p_e, style != PerEdge::Everything, d);
        let hit = !search.found.is_empty();
        if hit {
            marked.extend(condemned(state, &search, params.scope));
            marked.insert(v);
        }
        out.visited.extend_from_slice(&search.visited);
        out.found.extend_from_slice(&search.found);
        if hit && style == PerEdge::StopAtFirst {
            break;
        }
    }
    out.finish(marked)
}

/// Per edge, with probability `p`: examine `v`, then BFS from that parent to
/// depth `k - 1`. The whole procedure stops at the first find.
pub fn check_exhaustive_bfs<D: Decider>(
    state: &CkpState,
    v: NodeId,
    parents: &[NodeId],
    params: &CheckParams,
    d: &mut D,
) -> CheckOutcome {
    per_edge_check(state, v, parents, params, PerEdge::StopAtFirst, d)
}

/// Like [`check_exhaustive_bfs`], but a find only ends the current edge's search.
pub fn check_parentwise_bfs<D: Decider>(
    state: &CkpState,
    v: NodeId,
    parents: &[NodeId],
    params: &CheckParams,
    d: &mut D,
) -> CheckOutcome {
    per_edge_check(state, v, parents, params, PerEdge::OnePerEdge, d)
}

/// Per edge, with probability `p`: examine every PT node within `k - 1` of the
/// parent and condemn every minimal false node met.
pub fn check_complete<D: Decider>(
    state: &CkpState,
    v: NodeId,
    parents: &[NodeId],
    params: &CheckParams,
    d: &mut D,
) -> CheckOutcome {
    per_edge_check(state, v, parents, params, PerEdge::Everything, d)
}

/// Full checking protocol for a new node: one overall coin for Stringy and
/// BFS, per-edge coins otherwise.
pub fn run_check<D: Decider>(
    state: &CkpState,
    v: NodeId,
    kind: MechanismKind,
    params: &CheckParams,
    d: &mut D,
) -> CheckOutcome {
    let parents = state.parents(v).to_vec();
    match kind {
        MechanismKind::Stringy | MechanismKind::Bfs => {
            if !d.coin(params.p) {
                return CheckOutcome { performed: vec![false], ..Default::default() };
            }
            let mut out = if kind == MechanismKind::Stringy {
                check_stringy(state, v, params.k, params.p_e, d)
            } else {
                check_bfs(state, v, params.k, params.p_e, params.scope, d)
            };
            out.performed = vec![true];
            out
        }
        MechanismKind::ExhaustiveBfs => check_exhaustive_bfs(state, v, &parents, params, d),
        MechanismKind::ParentwiseBfs => check_parentwise_bfs(state, v, &parents, params, d),
        MechanismKind::Complete => check_complete(state, v, &parents, params, d),
    }
}
