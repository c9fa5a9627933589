//! Monotonicity couplings for simple tree processes (one parent per node).
//!
//! A single process Z over seven labels drives two ordinary processes at
//! once: X with the weaker checks (`p1` or `k1`) and Y with the stronger ones
//! (`p2` or `k2`). X is read off Z by a relabeling; Y is read off by another
//! relabeling plus removal of the nodes Y never had, and advances only on Z
//! steps whose parent is `CT` or `CF` (tracked by the Y-time map).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attachment::{AttachmentFunction, CombinationFactor};
use crate::checking::MechanismKind;
use crate::evolution::{derive_seed, run_to_state, AdversaryStrategy, Cadence, Features, RunConfig};
use crate::fenwick::WeightIndex;
use crate::state::{CkpState, Label, NodeId, NodeRecord};
use crate::structure::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ZLabel {
    Ct,
    Cf,
    Pf,
    /// Alive in X, dead in Y.
    Zcf,
    Zct,
    /// Exists in X only.
    Znct,
    /// Was `Znct`, then found false in X.
    Znpf,
}

impl ZLabel {
    /// Labels a new node may attach to.
    pub fn in_t(self) -> bool {
        matches!(self, Self::Ct | Self::Cf | Self::Zct | Self::Zcf | Self::Znct)
    }

    pub fn is_zombie(self) -> bool {
        matches!(self, Self::Zct | Self::Zcf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ct => "CT",
            Self::Cf => "CF",
            Self::Pf => "PF",
            Self::Zcf => "ZCF",
            Self::Zct => "ZCT",
            Self::Znct => "ZNCT",
            Self::Znpf => "ZNPF",
        }
    }

    /// Label in the weaker process X.
    pub fn in_x(self) -> Label {
        match self {
            Self::Ct | Self::Zct | Self::Znct => Label::Ct,
            Self::Cf | Self::Zcf => Label::Cf,
            Self::Pf | Self::Znpf => Label::Pf,
        }
    }

    /// Label in the stronger process Y, or `None` when Y lacks the node.
    pub fn in_y(self) -> Option<Label> {
        match self {
            Self::Ct => Some(Label::Ct),
            Self::Cf => Some(Label::Cf),
            Self::Pf | Self::Zct | Self::Zcf => Some(Label::Pf),
            Self::Znct | Self::Znpf => None,
        }
    }
}

impl fmt::Display for ZLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a single relabeling `from -> to` is allowed.
pub fn legal_transition(from: ZLabel, to: ZLabel) -> bool {
    use ZLabel::*;
    from == to
        || matches!(
            (from, to),
            (Ct, Pf) | (Ct, Zct) | (Cf, Pf) | (Cf, Zcf) | (Zct, Pf) | (Zcf, Pf) | (Znct, Pf) | (Znct, Znpf)
        )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "vary", rename_all = "snake_case")]
pub enum CouplingMode {
    /// Same depth `k`, check rates `p1 <= p2`.
    VaryP { p1: f64, p2: f64, k: usize },
    /// Same rate `p`, depths `k1 <= k2`.
    VaryK { p: f64, k1: usize, k2: usize },
}

impl CouplingMode {
    pub fn validate(&self) -> Result<(), CouplingError> {
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        match *self {
            Self::VaryP { p1, p2, k } => {
                if !(prob(p1) && prob(p2) && p1 <= p2) {
                    return Err(CouplingError::Config(format!("need 0 <= p1 <= p2 <= 1, got p1 = {p1}, p2 = {p2}")));
                }
                if k == 0 {
                    return Err(CouplingError::Config("k must be at least 1".into()));
                }
            }
            Self::VaryK { p, k1, k2 } => {
                if !prob(p) {
                    return Err(CouplingError::Config(format!("p = {p} is not a probability")));
                }
                if k1 == 0 || k1 > k2 {
                    return Err(CouplingError::Config(format!("need 1 <= k1 <= k2, got k1 = {k1}, k2 = {k2}")));
                }
            }
        }
        Ok(())
    }

    /// `(p, k)` of the weaker process X.
    pub fn x_params(&self) -> (f64, usize) {
        match *self {
            Self::VaryP { p1, k, .. } => (p1, k),
            Self::VaryK { p, k1, .. } => (p, k1),
        }
    }

    /// `(p, k)` of the stronger process Y.
    pub fn y_params(&self) -> (f64, usize) {
        match *self {
            Self::VaryP { p2, k, .. } => (p2, k),
            Self::VaryK { p, k2, .. } => (p, k2),
        }
    }

    /// Coupling for a pair of processes, which must be simple, single-parent,
    /// share the attachment function, and differ in `p` or in `k` only.
    pub fn from_features(x: &Features, y: &Features) -> Result<Self, CouplingError> {
        for f in [x, y] {
            if f.mode != Mode::Simple || f.m.is_point_mass() != Some(1) {
                return Err(CouplingError::OutOfScope);
            }
        }
        if x.attach != y.attach {
            return Err(CouplingError::Config("both processes must share the attachment function".into()));
        }
        let mode = if x.k == y.k {
            Self::VaryP { p1: x.p, p2: y.p, k: x.k }
        } else if x.p == y.p {
            Self::VaryK { p: x.p, k1: x.k, k2: y.k }
        } else {
            return Err(CouplingError::Config("the processes may differ in p or in k, not both".into()));
        };
        mode.validate()?;
        Ok(mode)
    }
}

/// Switches between the rules as printed and the completed reading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingOptions {
    /// Leave `ZCF` out of the stop set of a check made only in Y.
    pub literal_stop_set: bool,
    /// Relabel `ZNCT` path nodes to `PF` (not `ZNPF`) when a check from a
    /// `ZNCT` node finds a false node.
    pub literal_znct_to_pf: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CouplingError {
    #[error("invalid coupling: {0}")]
    Config(String),
    #[error(
        "the coupling covers simple processes with exactly one parent per node; \
         whether it extends to multi-parent or general processes is an open question"
    )]
    OutOfScope,
    #[error("illegal relabeling of node {node}: {from} -> {to}")]
    IllegalTransition { node: NodeId, from: ZLabel, to: ZLabel },
    #[error("bad coupled state: {0}")]
    BadState(String),
}

#[derive(Debug, Clone)]
pub struct CoupledState {
    attach: AttachmentFunction,
    mode: CouplingMode,
    options: CouplingOptions,
    labels: Vec<ZLabel>,
    parent: Vec<Option<NodeId>>,
    birth: Vec<u64>,
    t_degree: Vec<usize>,
    weights: WeightIndex,
    t_count: usize,
    /// `y_time[t]` for every Z step `t` so far.
    y_time: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relabel {
    pub node: NodeId,
    pub from: ZLabel,
    pub to: ZLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledStep {
    /// No node with a label in T: nothing happened.
    pub stopped: bool,
    pub update: bool,
    pub node: Option<NodeId>,
    pub parent: Option<NodeId>,
    pub parent_label: Option<ZLabel>,
    pub u: f64,
    pub relabels: Vec<Relabel>,
}

impl CoupledState {
    /// The initial state: one `CF` node.
    pub fn new(attach: AttachmentFunction, mode: CouplingMode, options: CouplingOptions) -> Result<Self, CouplingError> {
        Self::from_parts(attach, mode, options, &[None], &[ZLabel::Cf])
    }

    /// Builds a state from parent pointers and labels. Node 0 is the root and
    /// every other node needs an older parent. All nodes count as false, as in
    /// any state grown from a single `CF` node.
    pub fn from_parts(
        attach: AttachmentFunction,
        mode: CouplingMode,
        options: CouplingOptions,
        parents: &[Option<NodeId>],
        labels: &[ZLabel],
    ) -> Result<Self, CouplingError> {
        mode.validate()?;
        attach.validate().map_err(|e| CouplingError::Config(e.0))?;
        if parents.len() != labels.len() || parents.is_empty() {
            return Err(CouplingError::BadState("need one label per node and at least one node".into()));
        }
        let mut z = Self {
            attach,
            mode,
            options,
            labels: Vec::new(),
            parent: Vec::new(),
            birth: Vec::new(),
            t_degree: Vec::new(),
            weights: WeightIndex::default(),
            t_count: 0,
            y_time: vec![0],
        };
        for (v, (&p, &l)) in parents.iter().zip(labels).enumerate() {
            match p {
                None if v == 0 => {}
                Some(p) if p < v => {}
                _ => return Err(CouplingError::BadState(format!("node {v} has bad parent {p:?}"))),
            }
            z.push(p, l, v as u64);
        }
        Ok(z)
    }

    fn push(&mut self, parent: Option<NodeId>, label: ZLabel, birth: u64) -> NodeId {
        let v = self.labels.len();
        self.labels.push(label);
        self.parent.push(parent);
        self.birth.push(birth);
        self.t_degree.push(0);
        self.weights.push(if label.in_t() { self.attach.eval(0) } else { 0.0 });
        if label.in_t() {
            self.t_count += 1;
            if let Some(p) = parent {
                self.t_degree[p] += 1;
                self.refresh(p);
            }
        }
        v
    }

    fn refresh(&mut self, v: NodeId) {
        let w = if self.labels[v].in_t() { self.attach.eval(self.t_degree[v]) } else { 0.0 };
        self.weights.set(v, w);
    }

    fn relabel(&mut self, v: NodeId, to: ZLabel, log: &mut Vec<Relabel>) -> Result<(), CouplingError> {
        let from = self.labels[v];
        if from == to {
            return Ok(());
        }
        if !legal_transition(from, to) {
            return Err(CouplingError::IllegalTransition { node: v, from, to });
        }
        self.labels[v] = to;
        log.push(Relabel { node: v, from, to });
        if from.in_t() != to.in_t() {
            // Only T -> non-T transitions are legal.
            self.t_count -= 1;
            self.weights.set(v, 0.0);
            if let Some(p) = self.parent[v] {
                self.t_degree[p] -= 1;
                self.refresh(p);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, v: NodeId) -> ZLabel {
        self.labels[v]
    }

    pub fn labels(&self) -> &[ZLabel] {
        &self.labels
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    pub fn t_degree(&self, v: NodeId) -> usize {
        self.t_degree[v]
    }

    pub fn mode(&self) -> CouplingMode {
        self.mode
    }

    /// Number of Z steps taken.
    pub fn step(&self) -> u64 {
        (self.y_time.len() - 1) as u64
    }

    pub fn y_time(&self, t: u64) -> Option<u64> {
        self.y_time.get(t as usize).copied()
    }

    pub fn current_y_time(&self) -> u64 {
        *self.y_time.last().expect("y_time starts at 0")
    }

    /// X has no PT node left.
    pub fn x_eliminated(&self) -> bool {
        self.t_count == 0
    }

    /// Y has no PT node left.
    pub fn y_eliminated(&self) -> bool {
        !self.labels.iter().any(|l| matches!(l, ZLabel::Ct | ZLabel::Cf))
    }

    pub fn count(&self, label: ZLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// `v` and its ancestors, at most `depth + 1` nodes.
    fn path(&self, v: NodeId, depth: usize) -> Vec<NodeId> {
        let mut out = vec![v];
        let mut cur = v;
        while out.len() <= depth {
            match self.parent[cur] {
                Some(p) => {
                    out.push(p);
                    cur = p;
                }
                None => break,
            }
        }
        out
    }

    fn mark_path_pf(&mut self, path: &[NodeId], log: &mut Vec<Relabel>) -> Result<(), CouplingError> {
        for &w in path {
            let to = match self.labels[w] {
                ZLabel::Znct if !self.options.literal_znct_to_pf => ZLabel::Znpf,
                ZLabel::Znpf => ZLabel::Znpf,
                _ => ZLabel::Pf,
            };
            self.relabel(w, to, log)?;
        }
        Ok(())
    }

    fn zombify(&mut self, path: &[NodeId], log: &mut Vec<Relabel>) -> Result<(), CouplingError> {
        for &w in path {
            match self.labels[w] {
                ZLabel::Ct => self.relabel(w, ZLabel::Zct, log)?,
                ZLabel::Cf => self.relabel(w, ZLabel::Zcf, log)?,
                _ => {}
            }
        }
        Ok(())
    }

    /// Check from a new `CT` node seen by both processes up to `k_both`, and by
    /// Y alone from there up to `k_y`.
    fn check_ct(&mut self, v: NodeId, k_both: usize, k_y: usize, log: &mut Vec<Relabel>) -> Result<(), CouplingError> {
        let walk = self.path(v, k_y);
        let mut zombie = false;
        for (i, &w) in walk.iter().enumerate() {
            let l = self.labels[w];
            if i <= k_both {
                if matches!(l, ZLabel::Pf | ZLabel::Cf | ZLabel::Zcf) {
                    return self.mark_path_pf(&walk[..=i], log);
                }
                if !zombie && l == ZLabel::Zct {
                    for &x in &walk[..=i] {
                        if self.labels[x] == ZLabel::Ct {
                            self.relabel(x, ZLabel::Zct, log)?;
                        }
                    }
                    zombie = true;
                }
            } else if matches!(l, ZLabel::Zcf | ZLabel::Zct | ZLabel::Cf | ZLabel::Pf) {
                return self.zombify(&walk[..=i], log);
            }
        }
        Ok(())
    }

    /// Check from a new `ZNCT` node; only X sees it.
    fn check_znct(&mut self, v: NodeId, k: usize, log: &mut Vec<Relabel>) -> Result<(), CouplingError> {
        let walk = self.path(v, k);
        for (i, &w) in walk.iter().enumerate() {
            match self.labels[w] {
                ZLabel::Cf | ZLabel::Zcf | ZLabel::Pf => return self.mark_path_pf(&walk[..=i], log),
                ZLabel::Znpf => {
                    for &x in &walk[..i] {
                        self.relabel(x, ZLabel::Znpf, log)?;
                    }
                    return Ok(());
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Check made in Y but not in X.
    fn check_y_only(&mut self, v: NodeId, k: usize, log: &mut Vec<Relabel>) -> Result<(), CouplingError> {
        let walk = self.path(v, k);
        for (i, &w) in walk.iter().enumerate() {
            let stop = match self.labels[w] {
                ZLabel::Cf | ZLabel::Zct | ZLabel::Pf => true,
                ZLabel::Zcf => !self.options.literal_stop_set,
                _ => false,
            };
            if stop {
                return self.zombify(&walk[..=i], log);
            }
        }
        Ok(())
    }
}

/// One step of the coupled process.
pub fn coupled_step<R: Rng + ?Sized>(z: &mut CoupledState, rng: &mut R) -> Result<CoupledStep, CouplingError> {
    let t = z.step() + 1;
    let total = z.weights.total();
    let y_now = z.current_y_time();
    let stopped = CoupledStep {
        stopped: true,
        update: false,
        node: None,
        parent: None,
        parent_label: None,
        u: f64::NAN,
        relabels: Vec::new(),
    };
    if z.t_count == 0 || !(total > 0.0) {
        z.y_time.push(y_now);
        return Ok(stopped);
    }
    let Some(u) = z.weights.find(rng.gen::<f64>() * total) else {
        z.y_time.push(y_now);
        return Ok(stopped);
    };
    let parent_label = z.labels[u];
    let update = matches!(parent_label, ZLabel::Ct | ZLabel::Cf);
    let label = if update { ZLabel::Ct } else { ZLabel::Znct };
    let v = z.push(Some(u), label, t);
    let draw: f64 = rng.gen();
    let mut log = Vec::new();
    match z.mode {
        CouplingMode::VaryP { p1, p2, k } => {
            if draw < p1 {
                if label == ZLabel::Ct {
                    z.check_ct(v, k, k, &mut log)?;
                } else {
                    z.check_znct(v, k, &mut log)?;
                }
            } else if draw < p2 && label == ZLabel::Ct {
                z.check_y_only(v, k, &mut log)?;
            }
        }
        CouplingMode::VaryK { p, k1, k2 } => {
            if draw < p {
                if label == ZLabel::Ct {
                    z.check_ct(v, k1, k2, &mut log)?;
                } else {
                    z.check_znct(v, k1, &mut log)?;
                }
            }
        }
    }
    z.y_time.push(y_now + update as u64);
    Ok(CoupledStep { stopped: false, update, node: Some(v), parent: Some(u), parent_label: Some(parent_label), u: draw, relabels: log })
}

fn records(z: &CoupledState, keep: impl Fn(NodeId) -> Option<Label>) -> (Vec<NodeRecord>, Vec<NodeId>) {
    let mut new_id = vec![usize::MAX; z.len()];
    let mut out = Vec::new();
    let mut ids = Vec::new();
    for v in 0..z.len() {
        let Some(label) = keep(v) else { continue };
        new_id[v] = out.len();
        out.push(NodeRecord {
            id: out.len(),
            parents: z.parent[v].map(|p| vec![new_id[p]]).unwrap_or_default(),
            children: Vec::new(),
            label,
            is_false: true,
            birth_time: z.birth[v],
            adversarial: false,
        });
        ids.push(v);
    }
    (out, ids)
}

/// The weaker process: `ZCF -> CF`, `ZCT, ZNCT -> CT`, `ZNPF -> PF`.
pub fn project_x(z: &CoupledState) -> CkpState {
    let (recs, _) = records(z, |v| Some(z.labels[v].in_x()));
    CkpState::from_records(z.attach.clone(), recs, z.step()).expect("projection of a valid coupled state")
}

/// The stronger process at the current Y-time: zombies become PF and nodes
/// Y never had are dropped. Also returns the Z id of each Y node.
pub fn project_y(z: &CoupledState) -> (CkpState, Vec<NodeId>) {
    let (recs, ids) = records(z, |v| z.labels[v].in_y());
    let state = CkpState::from_records(z.attach.clone(), recs, z.current_y_time()).expect("projection of a valid coupled state");
    (state, ids)
}

/// Nodes breaking the zombie-ancestor law: above a `ZCT`/`ZCF` node, every
/// ancestor up to the nearest `PF` (or `ZNPF`, or the root) is a zombie;
/// above a `ZNCT` node come some `ZNCT` nodes and then only zombies.
pub fn law_violations(z: &CoupledState) -> Vec<NodeId> {
    let mut bad = Vec::new();
    for v in 0..z.len() {
        let l = z.labels[v];
        if !(l.is_zombie() || l == ZLabel::Znct) {
            continue;
        }
        let mut in_znct_prefix = l == ZLabel::Znct;
        let mut cur = z.parent[v];
        while let Some(a) = cur {
            let la = z.labels[a];
            if matches!(la, ZLabel::Pf | ZLabel::Znpf) {
                break;
            }
            let ok = if in_znct_prefix && la == ZLabel::Znct {
                true
            } else {
                in_znct_prefix = false;
                la.is_zombie()
            };
            if !ok {
                bad.push(v);
                break;
            }
            cur = z.parent[a];
        }
    }
    bad
}

/// X eliminated implies Y eliminated at the matching Y-time.
pub fn monotonicity_witness(z: &CoupledState) -> bool {
    if !z.x_eliminated() {
        return true;
    }
    let (y, _) = project_y(z);
    y.pt_count() == 0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub seed: u64,
    pub steps: u64,
    pub final_y_time: u64,
    pub x_eliminated_at: Option<u64>,
    pub y_time_at_x_elimination: Option<u64>,
    /// `None` when X never eliminated.
    pub witness: Option<bool>,
    pub law_violations: u64,
    pub transition_violations: u64,
    pub update_mismatches: u64,
    pub y_time_violations: u64,
    /// Steps where replaying X through the ordinary engine disagreed.
    pub x_replay_violations: u64,
    pub zombies_created: u64,
}

impl CouplingTrace {
    pub fn violations(&self) -> u64 {
        self.law_violations
            + self.transition_violations
            + self.update_mismatches
            + self.y_time_violations
            + self.x_replay_violations
            + u64::from(self.witness == Some(false))
    }
}

/// Runs `horizon` Z steps (stopping once X is eliminated), checking the
/// zombie-ancestor law, the transition table, the Update flag and Y-time
/// after every step, and replaying X through the ordinary engine.
pub fn run_coupled(
    attach: &AttachmentFunction,
    mode: CouplingMode,
    options: CouplingOptions,
    horizon: u64,
    seed: u64,
) -> Result<CouplingTrace, CouplingError> {
    let mut z = CoupledState::new(attach.clone(), mode, options)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = CkpState::with_root(attach.clone(), Label::Cf);
    let mut trace = CouplingTrace { seed, ..Default::default() };
    for t in 1..=horizon {
        let before_y = z.current_y_time();
        let step = match coupled_step(&mut z, &mut rng) {
            Ok(s) => s,
            Err(CouplingError::IllegalTransition { .. }) => {
                trace.transition_violations += 1;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.steps = t;
        if step.stopped {
            break;
        }
        let after_y = z.current_y_time();
        if after_y < before_y || after_y > before_y + 1 {
            trace.y_time_violations += 1;
        }
        let expect_update = matches!(step.parent_label, Some(ZLabel::Ct | ZLabel::Cf));
        if step.update != expect_update || (after_y == before_y + 1) != step.update {
            trace.update_mismatches += 1;
        }
        trace.zombies_created += step.relabels.iter().filter(|r| r.to.is_zombie() && !r.from.is_zombie()).count() as u64;
        trace.law_violations += law_violations(&z).len() as u64;

        // Replay the X view: same parent, then the nodes that turned PF in X.
        x.set_step(t);
        let parent = step.parent.expect("a step that added a node has a parent");
        match x.add_node(&[parent], Label::Ct, false) {
            Ok(id) if Some(id) == step.node => {}
            _ => trace.x_replay_violations += 1,
        }
        let marks: Vec<NodeId> =
            step.relabels.iter().filter(|r| r.to.in_x() == Label::Pf && r.from.in_x() != Label::Pf).map(|r| r.node).collect();
        if x.apply_marks(&marks).is_err() {
            trace.x_replay_violations += 1;
        }
        let projected_labels_agree = (0..z.len()).all(|v| z.labels[v].in_x() == x.label(v));
        if !projected_labels_agree {
            trace.x_replay_violations += 1;
        }

        if z.x_eliminated() {
            trace.x_eliminated_at = Some(t);
            trace.y_time_at_x_elimination = Some(z.current_y_time());
            trace.witness = Some(monotonicity_witness(&z));
            break;
        }
    }
    if x.check_consistency().is_err() {
        trace.x_replay_violations += 1;
    }
    trace.final_y_time = z.current_y_time();
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub statistic: String,
    pub coupled_mean: f64,
    pub direct_mean: f64,
    pub abs_diff: f64,
    /// Two-proportion z for frequencies, Welch t for counts.
    pub test_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub mode: CouplingMode,
    pub trials: usize,
    pub horizon: u64,
    pub x: Vec<Comparison>,
    pub y: Vec<Comparison>,
    /// Y runs that hit the Z step cap before reaching the horizon.
    pub y_censored: usize,
}

impl AuditReport {
    pub fn eliminated_gap_x(&self) -> f64 {
        self.x[0].abs_diff
    }

    pub fn eliminated_gap_y(&self) -> f64 {
        self.y[0].abs_diff
    }
}

pub const MIN_AUDIT_TRIALS: usize = 30;
/// Z steps allowed per Y step before a Y run is censored.
pub const Y_STEP_CAP_FACTOR: u64 = 50;

#[derive(Debug, Clone, Copy)]
struct Outcome {
    eliminated: bool,
    nodes: f64,
    pf: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

fn compare(coupled: &[Outcome], direct: &[Outcome]) -> Vec<Comparison> {
    let freq = |o: &[Outcome]| o.iter().filter(|x| x.eliminated).count() as f64 / o.len() as f64;
    let (a, b) = (freq(coupled), freq(direct));
    let (na, nb) = (coupled.len() as f64, direct.len() as f64);
    let pooled = (a * na + b * nb) / (na + nb);
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    let z = if se > 0.0 { (a - b) / se } else { 0.0 };
    let mut out = vec![Comparison {
        statistic: "eliminated_by_horizon".into(),
        coupled_mean: a,
        direct_mean: b,
        abs_diff: (a - b).abs(),
        test_statistic: z,
    }];
    for (name, get) in [("nodes", (|o: &Outcome| o.nodes) as fn(&Outcome) -> f64), ("pf", |o: &Outcome| o.pf)] {
        let xs: Vec<f64> = coupled.iter().map(get).collect();
        let ys: Vec<f64> = direct.iter().map(get).collect();
        let (ma, va) = mean_var(&xs);
        let (mb, vb) = mean_var(&ys);
        let se = (va / na + vb / nb).sqrt();
        out.push(Comparison {
            statistic: name.into(),
            coupled_mean: ma,
            direct_mean: mb,
            abs_diff: (ma - mb).abs(),
            test_statistic: if se > 0.0 { (ma - mb) / se } else { 0.0 },
        });
    }
    out
}

fn direct_outcome(attach: &AttachmentFunction, p: f64, k: usize, horizon: u64, seed: u64) -> Outcome {
    let f = Features::simple(attach.clone(), CombinationFactor::constant(1), MechanismKind::Stringy, p, k);
    let init = CkpState::with_root(attach.clone(), Label::Cf);
    let cfg = RunConfig { horizon, cadence: Cadence::None };
    let (res, state) = run_to_state(&f, &init, &cfg, &AdversaryStrategy::RandomPt, seed, &mut ());
    Outcome { eliminated: !res.survived_at_horizon, nodes: state.len() as f64, pf: state.pf_count() as f64 }
}

fn coupled_outcomes(
    attach: &AttachmentFunction,
    mode: CouplingMode,
    options: CouplingOptions,
    horizon: u64,
    seed: u64,
) -> Result<(Outcome, Outcome, bool), CouplingError> {
    let mut z = CoupledState::new(attach.clone(), mode, options)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x_out = None;
    let mut y_out = None;
    let cap = horizon.saturating_mul(Y_STEP_CAP_FACTOR).max(horizon);
    let y_view = |z: &CoupledState| {
        let (y, _) = project_y(z);
        Outcome { eliminated: y.pt_count() == 0, nodes: y.len() as f64, pf: y.pf_count() as f64 }
    };
    let x_view = |z: &CoupledState| Outcome {
        eliminated: z.x_eliminated(),
        nodes: z.len() as f64,
        pf: (z.count(ZLabel::Pf) + z.count(ZLabel::Znpf)) as f64,
    };
    let mut censored = false;
    loop {
        if x_out.is_none() && (z.step() == horizon || z.x_eliminated()) {
            x_out = Some(x_view(&z));
        }
        if y_out.is_none() && (z.current_y_time() == horizon || z.y_eliminated()) {
            y_out = Some(y_view(&z));
        }
        if x_out.is_some() && y_out.is_some() {
            break;
        }
        if z.step() >= cap {
            censored = true;
            y_out.get_or_insert_with(|| y_view(&z));
            x_out.get_or_insert_with(|| x_view(&z));
            break;
        }
        coupled_step(&mut z, &mut rng)?;
    }
    Ok((x_out.unwrap(), y_out.unwrap(), censored))
}

/// Compares the coupled projections with directly simulated processes of the
/// matching parameters over `trials` independent runs each.
pub fn marginal_audit(
    attach: &AttachmentFunction,
    mode: CouplingMode,
    options: CouplingOptions,
    trials: usize,
    horizon: u64,
    seed: u64,
) -> Result<AuditReport, CouplingError> {
    mode.validate()?;
    if trials < MIN_AUDIT_TRIALS {
        return Err(CouplingError::Config(format!("need at least {MIN_AUDIT_TRIALS} trials, got {trials}")));
    }
    let (px, kx) = mode.x_params();
    let (py, ky) = mode.y_params();
    let rows: Vec<Result<_, CouplingError>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (cx, cy, censored) = coupled_outcomes(attach, mode, options, horizon, derive_seed(seed, &[i, 0]))?;
            let dx = direct_outcome(attach, px, kx, horizon, derive_seed(seed, &[i, 1]));
            let dy = direct_outcome(attach, py, ky, horizon, derive_seed(seed, &[i, 2]));
            Ok((cx, cy, censored, dx, dy))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let pick = |f: fn(&(Outcome, Outcome, bool, Outcome, Outcome)) -> Outcome| rows.iter().map(f).collect::<Vec<_>>();
    Ok(AuditReport {
        mode,
        trials,
        horizon,
        x: compare(&pick(|r| r.0), &pick(|r| r.3)),
        y: compare(&pick(|r| r.1), &pick(|r| r.4)),
        y_censored: rows.iter().filter(|r| r.2).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ZLabel::*;

    fn pref() -> AttachmentFunction {
        AttachmentFunction::preferential()
    }

    fn vary_p(p1: f64, p2: f64, k: usize) -> CouplingMode {
        CouplingMode::VaryP { p1, p2, k }
    }

    fn chain(mode: CouplingMode, labels: &[ZLabel]) -> CoupledState {
        let parents: Vec<Option<NodeId>> = (0..labels.len()).map(|i| i.checked_sub(1)).collect();
        CoupledState::from_parts(pref(), mode, CouplingOptions::default(), &parents, labels).unwrap()
    }

    /// Rng whose `gen::<f64>()` calls return the scripted values in order.
    struct Script(Vec<f64>);

    impl rand::RngCore for Script {
        fn next_u32(&mut self) -> u32 {
            (self.next_u64() >> 32) as u32
        }
        fn next_u64(&mut self) -> u64 {
            let x = self.0.remove(0);
            // rand maps the top 53 bits to [0, 1).
            ((x * (1u64 << 53) as f64) as u64) << 11
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            for chunk in dest.chunks_mut(8) {
                let bytes = self.next_u64().to_le_bytes();
                chunk.copy_from_slice(&bytes[..chunk.len()]);
            }
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            self.fill_bytes(dest);
            Ok(())
        }
    }

    #[test]
    fn no_check_branch_adds_ct() {
        let mut z = chain(vary_p(0.3, 0.6, 2), &[Cf, Ct]);
        // Parent pick lands on node 1 (weights 2 and 1 of total 3), then U > p2.
        let s = coupled_step(&mut z, &mut Script(vec![0.9, 0.99])).unwrap();
        assert_eq!((s.parent, s.update, s.node), (Some(1), true, Some(2)));
        assert_eq!(z.labels(), &[Cf, Ct, Ct]);
        assert!(s.relabels.is_empty());
        assert_eq!(z.current_y_time(), 1);
    }

    #[test]
    fn y_only_check_makes_zombies() {
        let mut z = chain(vary_p(0.3, 0.6, 2), &[Cf, Ct]);
        let s = coupled_step(&mut z, &mut Script(vec![0.9, 0.5])).unwrap();
        assert_eq!(z.labels(), &[Zcf, Zct, Zct]);
        assert_eq!(s.relabels.len(), 3);
        let (y, ids) = project_y(&z);
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(y.nodes().iter().all(|n| n.label == Label::Pf));
        let x = project_x(&z);
        assert_eq!(x.nodes().iter().map(|n| n.label).collect::<Vec<_>>(), vec![Label::Cf, Label::Ct, Label::Ct]);
        assert!(law_violations(&z).is_empty());
    }

    #[test]
    fn shared_check_marks_pf() {
        let mut z = chain(vary_p(0.3, 0.6, 2), &[Cf, Ct]);
        coupled_step(&mut z, &mut Script(vec![0.9, 0.1])).unwrap();
        assert_eq!(z.labels(), &[Pf, Pf, Pf]);
        assert!(z.x_eliminated() && monotonicity_witness(&z));
    }

    #[test]
    fn zombie_parent_gives_znct_and_no_update() {
        let mut z = chain(vary_p(0.3, 0.6, 3), &[Zcf, Zct]);
        let s = coupled_step(&mut z, &mut Script(vec![0.9, 0.99])).unwrap();
        assert!(!s.update);
        assert_eq!(z.label(2), Znct);
        assert_eq!(z.current_y_time(), 0);
        let (y, ids) = project_y(&z);
        assert_eq!((y.len(), ids), (2, vec![0, 1]));
        // A shared check from the ZNCT node reaches the ZCF root.
        coupled_step(&mut z, &mut Script(vec![0.99, 0.1])).unwrap();
        assert_eq!(z.labels(), &[Pf, Pf, Znpf, Znpf]);
    }

    #[test]
    fn literal_switch_sends_znct_to_pf() {
        let opts = CouplingOptions { literal_znct_to_pf: true, ..Default::default() };
        let mut z = CoupledState::from_parts(pref(), vary_p(0.3, 0.6, 3), opts, &[None, Some(0), Some(1)], &[Zcf, Zct, Znct])
            .unwrap();
        coupled_step(&mut z, &mut Script(vec![0.99, 0.1])).unwrap();
        assert_eq!(z.labels(), &[Pf, Pf, Pf, Pf]);
    }

    #[test]
    fn depth_two_k_check_zombifies() {
        // CF at distance 3 from the new node: beyond k1 = 2, within k2 = 3.
        let mode = CouplingMode::VaryK { p: 0.5, k1: 2, k2: 3 };
        let mut z = chain(mode, &[Cf, Ct, Ct]);
        coupled_step(&mut z, &mut Script(vec![0.99, 0.1])).unwrap();
        assert_eq!(z.labels(), &[Zcf, Zct, Zct, Zct]);
        assert!(law_violations(&z).is_empty());
    }

    #[test]
    fn zombie_flag_continues_to_pf() {
        // PF <- ZCT <- CT, new CT below: zombie at i = 2, then PF at i = 3.
        let mut z = chain(vary_p(0.5, 0.5, 3), &[Pf, Zct, Ct]);
        coupled_step(&mut z, &mut Script(vec![0.99, 0.1])).unwrap();
        assert_eq!(z.labels(), &[Pf, Pf, Pf, Pf]);
    }

    #[test]
    fn hand_built_witness() {
        let z = CoupledState::from_parts(
            pref(),
            vary_p(0.3, 0.6, 2),
            CouplingOptions::default(),
            &[None, Some(0), Some(1)],
            &[Pf, Pf, Znpf],
        )
        .unwrap();
        assert!(z.x_eliminated());
        assert!(monotonicity_witness(&z));
        assert_eq!(project_y(&z).0.len(), 2);
    }

    #[test]
    fn law_detects_a_live_ancestor() {
        let z = chain(vary_p(0.3, 0.6, 2), &[Cf, Ct, Zct]);
        assert_eq!(law_violations(&z), vec![2]);
        let w = chain(vary_p(0.3, 0.6, 2), &[Zcf, Znct, Zct]);
        assert_eq!(law_violations(&w), vec![2]);
    }

    #[test]
    fn transition_table() {
        assert!(legal_transition(Ct, Zct) && legal_transition(Znct, Znpf) && legal_transition(Zcf, Pf));
        assert!(!legal_transition(Pf, Ct) && !legal_transition(Zct, Ct) && !legal_transition(Znpf, Znct));
        assert!(!legal_transition(Ct, Znct) && !legal_transition(Cf, Zct));
    }

    #[test]
    fn degenerate_coupling_has_no_zombies() {
        for seed in 0..20 {
            let t = run_coupled(&pref(), vary_p(0.5, 0.5, 3), CouplingOptions::default(), 300, seed).unwrap();
            assert_eq!(t.zombies_created, 0);
            assert_eq!(t.violations(), 0);
            let k = run_coupled(&pref(), CouplingMode::VaryK { p: 0.5, k1: 3, k2: 3 }, CouplingOptions::default(), 300, seed)
                .unwrap();
            assert_eq!(k.zombies_created, 0);
        }
    }

    #[test]
    fn trajectories_are_clean() {
        for seed in 0..30 {
            for mode in [vary_p(0.3, 0.8, 3), CouplingMode::VaryK { p: 0.7, k1: 2, k2: 5 }] {
                let t = run_coupled(&pref(), mode, CouplingOptions::default(), 400, seed).unwrap();
                assert_eq!(t.violations(), 0, "{mode:?} seed {seed}: {t:?}");
            }
        }
    }

    #[test]
    fn rejects_out_of_scope() {
        let f = |m: usize, p: f64, k: usize| {
            Features::simple(pref(), CombinationFactor::constant(m), MechanismKind::Stringy, p, k)
        };
        assert_eq!(CouplingMode::from_features(&f(2, 0.3, 3), &f(2, 0.5, 3)), Err(CouplingError::OutOfScope));
        assert_eq!(CouplingMode::from_features(&f(1, 0.3, 3), &f(1, 0.5, 3)), Ok(vary_p(0.3, 0.5, 3)));
        assert!(CouplingMode::from_features(&f(1, 0.3, 3), &f(1, 0.5, 4)).is_err());
        assert!(vary_p(0.6, 0.3, 2).validate().is_err());
    }
}
