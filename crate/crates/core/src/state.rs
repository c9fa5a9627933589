//! The labeled DAG at the heart of a process: nodes, labels, hidden truth and
//! the degree/weight index used for parent selection.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attachment::AttachmentFunction;
use crate::fenwick::WeightIndex;

pub type NodeId = usize;

/// Public label of a node. `Ct` and `Cf` are both proclaimed true.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "CT")]
    Ct,
    #[serde(rename = "CF")]
    Cf,
    #[serde(rename = "PF")]
    Pf,
}

impl Label {
    pub fn is_pt(self) -> bool {
        !matches!(self, Label::Pf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ct => "CT",
            Label::Cf => "CF",
            Label::Pf => "PF",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = StateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CT" | "ct" => Ok(Label::Ct),
            "CF" | "cf" => Ok(Label::Cf),
            "PF" | "pf" => Ok(Label::Pf),
            _ => Err(StateError::Parse(format!("unknown label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub parents: Vec<NodeId>,
    pub children: Vec<NodeId>,
    pub label: Label,
    pub is_false: bool,
    pub birth_time: u64,
    pub adversarial: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error("a new node needs at least one parent")]
    EmptyParents,
    #[error("parent {0} does not exist")]
    UnknownParent(NodeId),
    #[error("parent {0} is proclaimed false and cannot take children")]
    PfParent(NodeId),
    #[error("a new node must be born CT or CF")]
    BornPf,
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("node {0} is true and cannot be marked PF")]
    UnsoundMark(NodeId),
    #[error("parse error: {0}")]
    Parse(String),
}

/// A process state. Node ids are birth ordinals, so every parent id is smaller
/// than its child's id.
#[derive(Debug, Clone)]
pub struct CkpState {
    nodes: Vec<NodeRecord>,
    pt_degree: Vec<usize>,
    attach: AttachmentFunction,
    weights: WeightIndex,
    step: u64,
    pt_count: usize,
    pt_false_count: usize,
    pf_count: usize,
    false_count: usize,
}

impl CkpState {
    /// Empty state; use [`CkpState::with_root`] or an initializer for a usable start.
    pub fn new(attach: AttachmentFunction) -> Self {
        Self {
            nodes: Vec::new(),
            pt_degree: Vec::new(),
            attach,
            weights: WeightIndex::default(),
            step: 0,
            pt_count: 0,
            pt_false_count: 0,
            pf_count: 0,
            false_count: 0,
        }
    }

    /// A single parentless node with the given label.
    pub fn with_root(attach: AttachmentFunction, label: Label) -> Self {
        let mut s = Self::new(attach);
        s.push_root(label, false);
        s
    }

    /// Appends a parentless node. Used by initializers and parsers only.
    pub fn push_root(&mut self, label: Label, adversarial: bool) -> NodeId {
        let is_false = !matches!(label, Label::Ct);
        self.push_record(Vec::new(), label, is_false, self.step, adversarial)
    }

    fn push_record(
        &mut self,
        parents: Vec<NodeId>,
        label: Label,
        is_false: bool,
        birth_time: u64,
        adversarial: bool,
    ) -> NodeId {
        let id = self.nodes.len();
        for &p in &parents {
            self.nodes[p].children.push(id);
            if label.is_pt() {
                self.pt_degree[p] += 1;
                self.refresh_weight(p);
            }
        }
        self.nodes.push(NodeRecord {
            id,
            parents,
            children: Vec::new(),
            label,
            is_false,
            birth_time,
            adversarial,
        });
        self.pt_degree.push(0);
        let w = if label.is_pt() { self.attach.eval(0) } else { 0.0 };
        self.weights.push(w);
        if is_false {
            self.false_count += 1;
        }
        if label.is_pt() {
            self.pt_count += 1;
            if is_false {
                self.pt_false_count += 1;
            }
        } else {
            self.pf_count += 1;
        }
        id
    }

    fn refresh_weight(&mut self, v: NodeId) {
        let w = if self.nodes[v].label.is_pt() { self.attach.eval(self.pt_degree[v]) } else { 0.0 };
        self.weights.set(v, w);
    }

    /// Adds a node below `parents` (with multiplicity). Returns its id.
    pub fn add_node(&mut self, parents: &[NodeId], label: Label, adversarial: bool) -> Result<NodeId, StateError> {
        if parents.is_empty() {
            return Err(StateError::EmptyParents);
        }
        if !label.is_pt() {
            return Err(StateError::BornPf);
        }
        let mut is_false = label == Label::Cf;
        for &p in parents {
            let rec = self.nodes.get(p).ok_or(StateError::UnknownParent(p))?;
            if !rec.label.is_pt() {
                return Err(StateError::PfParent(p));
            }
            is_false |= rec.is_false;
        }
        Ok(self.push_record(parents.to_vec(), label, is_false, self.step, adversarial))
    }

    /// Relabels a PT False node as PF. Marking an already-PF node is a no-op.
    pub fn mark_pf(&mut self, v: NodeId) -> Result<(), StateError> {
        let rec = self.nodes.get(v).ok_or(StateError::UnknownNode(v))?;
        if !rec.is_false {
            return Err(StateError::UnsoundMark(v));
        }
        if rec.label == Label::Pf {
            return Ok(());
        }
        self.nodes[v].label = Label::Pf;
        self.pt_count -= 1;
        self.pt_false_count -= 1;
        self.pf_count += 1;
        self.weights.set(v, 0.0);
        for i in 0..self.nodes[v].parents.len() {
            let p = self.nodes[v].parents[i];
            self.pt_degree[p] -= 1;
            self.refresh_weight(p);
        }
        Ok(())
    }

    /// Marks every node in `marked`; all-or-nothing on soundness.
    pub fn apply_marks(&mut self, marked: &[NodeId]) -> Result<(), StateError> {
        if let Some(&bad) = marked.iter().find(|&&v| v >= self.len() || !self.nodes[v].is_false) {
            return Err(if bad >= self.len() { StateError::UnknownNode(bad) } else { StateError::UnsoundMark(bad) });
        }
        for &v in marked {
            self.mark_pf(v)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: NodeId) -> &NodeRecord {
        &self.nodes[v]
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn label(&self, v: NodeId) -> Label {
        self.nodes[v].label
    }

    pub fn is_pt(&self, v: NodeId) -> bool {
        self.nodes[v].label.is_pt()
    }

    pub fn is_pf(&self, v: NodeId) -> bool {
        self.nodes[v].label == Label::Pf
    }

    pub fn is_false(&self, v: NodeId) -> bool {
        self.nodes[v].is_false
    }

    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v].parents
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v].children
    }

    pub fn pt_degree(&self, v: NodeId) -> usize {
        self.pt_degree[v]
    }

    /// Number of CF-labeled children, with multiplicity.
    pub fn cf_degree(&self, v: NodeId) -> usize {
        self.nodes[v].children.iter().filter(|&&c| self.nodes[c].label == Label::Cf).count()
    }

    /// Number of CT-labeled children, with multiplicity.
    pub fn ct_degree(&self, v: NodeId) -> usize {
        self.nodes[v].children.iter().filter(|&&c| self.nodes[c].label == Label::Ct).count()
    }

    pub fn attachment(&self) -> &AttachmentFunction {
        &self.attach
    }

    /// Current attachment weight of `v` (zero for PF nodes).
    pub fn weight(&self, v: NodeId) -> f64 {
        self.weights.weight(v)
    }

    /// The normalizer `Z`, maintained incrementally.
    pub fn total_attachment_weight(&self) -> f64 {
        self.weights.total()
    }

    pub(crate) fn weight_index_find(&self, target: f64) -> Option<NodeId> {
        self.weights.find(target)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, t: u64) {
        self.step = t;
    }

    pub(crate) fn advance_step(&mut self) {
        self.step += 1;
    }

    pub fn pt_count(&self) -> usize {
        self.pt_count
    }

    pub fn pt_false_count(&self) -> usize {
        self.pt_false_count
    }

    pub fn pf_count(&self) -> usize {
        self.pf_count
    }

    pub fn true_count(&self) -> usize {
        self.nodes.len() - self.false_count
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len()).sum()
    }

    pub fn pt_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.label.is_pt()).map(|n| n.id)
    }

    pub fn pt_false_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.label.is_pt() && n.is_false).map(|n| n.id)
    }

    /// Compares every incremental index against a from-scratch recomputation.
    /// Weight totals are compared with a relative tolerance of 1e-9.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut deg = vec![0usize; self.nodes.len()];
        let mut counts = (0usize, 0usize, 0usize, 0usize);
        for n in &self.nodes {
            for &p in &n.parents {
                if p >= n.id {
                    return Err(format!("node {} has parent {} >= own id", n.id, p));
                }
                if n.label.is_pt() {
                    deg[p] += 1;
                }
            }
            let derived_false = n.parents.iter().any(|&p| self.nodes[p].is_false)
                || (n.parents.is_empty() && n.label == Label::Cf);
            if n.label == Label::Pf && !n.is_false {
                return Err(format!("node {} is PF but true", n.id));
            }
            if !n.parents.is_empty() && derived_false && !n.is_false {
                return Err(format!("node {} descends from a false node but is marked true", n.id));
            }
            for &c in &n.children {
                if !self.nodes[c].parents.contains(&n.id) {
                    return Err(format!("child list of {} names {} which lacks the back edge", n.id, c));
                }
            }
            counts.0 += n.label.is_pt() as usize;
            counts.1 += (n.label.is_pt() && n.is_false) as usize;
            counts.2 += (n.label == Label::Pf) as usize;
            counts.3 += n.is_false as usize;
        }
        let total_children: usize = self.nodes.iter().map(|n| n.children.len()).sum();
        if total_children != self.edge_count() {
            return Err("child and parent edge counts differ".into());
        }
        if deg != self.pt_degree {
            return Err("pt_degree differs from recomputation".into());
        }
        if counts != (self.pt_count, self.pt_false_count, self.pf_count, self.false_count) {
            return Err(format!(
                "counters differ: recomputed {counts:?}, stored {:?}",
                (self.pt_count, self.pt_false_count, self.pf_count, self.false_count)
            ));
        }
        let mut z = 0.0;
        for n in &self.nodes {
            let w = if n.label.is_pt() { self.attach.eval(deg[n.id]) } else { 0.0 };
            if w != self.weights.weight(n.id) {
                return Err(format!("cached weight of {} differs", n.id));
            }
            z += w;
        }
        let stored = self.total_attachment_weight();
        if (stored - z).abs() > 1e-9 * z.abs().max(1.0) {
            return Err(format!("total weight {stored} differs from recomputed {z}"));
        }
        Ok(())
    }

    pub(crate) fn from_records(attach: AttachmentFunction, records: Vec<NodeRecord>, step: u64) -> Result<Self, StateError> {
        let mut s = Self::new(attach);
        s.step = step;
        for (i, r) in records.into_iter().enumerate() {
            if r.id != i {
                return Err(StateError::Parse(format!("node ids must be 0..n in order, got {} at {}", r.id, i)));
            }
            for &p in &r.parents {
                if p >= i {
                    return Err(StateError::Parse(format!("node {i} has parent {p} that is not older")));
                }
            }
            if r.label == Label::Pf && !r.is_false {
                return Err(StateError::Parse(format!("node {i} is PF but true")));
            }
            let derived = r.label == Label::Cf || r.parents.iter().any(|&p| s.nodes[p].is_false);
            if derived && !r.is_false {
                return Err(StateError::Parse(format!("node {i} descends from a false node but is marked true")));
            }
            s.push_record(r.parents, r.label, r.is_false, r.birth_time, r.adversarial);
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pref() -> AttachmentFunction {
        AttachmentFunction::preferential()
    }

    #[test]
    fn descendant_of_cf_is_false() {
        let mut s = CkpState::with_root(pref(), Label::Cf);
        let v = s.add_node(&[0], Label::Ct, false).unwrap();
        assert_eq!(v, 1);
        assert!(s.is_false(1));
    }

    #[test]
    fn cf_birth_is_false_parent_stays_true() {
        let mut s = CkpState::with_root(pref(), Label::Ct);
        s.add_node(&[0], Label::Cf, false).unwrap();
        assert!(s.is_false(1));
        assert!(!s.is_false(0));
        assert_eq!(s.true_count(), 1);
    }

    #[test]
    fn multi_edge_bookkeeping() {
        let mut s = CkpState::with_root(pref(), Label::Cf);
        s.add_node(&[0], Label::Ct, false).unwrap();
        let v = s.add_node(&[1, 1], Label::Ct, false).unwrap();
        assert_eq!(v, 2);
        assert_eq!(s.pt_degree(1), 2);
        assert_eq!(s.children(1), &[2, 2]);
        // Weights: a(1) + a(2) + a(0) = 2 + 3 + 1.
        assert_eq!(s.total_attachment_weight(), 6.0);
        s.check_consistency().unwrap();
    }

    #[test]
    fn rejects_bad_parents() {
        let mut s = CkpState::with_root(pref(), Label::Cf);
        assert_eq!(s.add_node(&[], Label::Ct, false), Err(StateError::EmptyParents));
        assert_eq!(s.add_node(&[3], Label::Ct, false), Err(StateError::UnknownParent(3)));
        s.mark_pf(0).unwrap();
        assert_eq!(s.add_node(&[0], Label::Ct, false), Err(StateError::PfParent(0)));
    }

    #[test]
    fn marking_updates_indices() {
        let mut s = CkpState::with_root(pref(), Label::Cf);
        s.add_node(&[0], Label::Ct, false).unwrap();
        s.add_node(&[1, 0], Label::Ct, false).unwrap();
        s.mark_pf(2).unwrap();
        assert_eq!(s.pt_degree(0), 1);
        assert_eq!(s.pt_degree(1), 0);
        assert_eq!(s.pf_count(), 1);
        assert_eq!(s.pt_false_count(), 2);
        s.check_consistency().unwrap();
    }

    #[test]
    fn true_nodes_cannot_be_marked() {
        let mut s = CkpState::with_root(pref(), Label::Ct);
        assert_eq!(s.mark_pf(0), Err(StateError::UnsoundMark(0)));
        assert_eq!(s.apply_marks(&[0]), Err(StateError::UnsoundMark(0)));
    }
}
