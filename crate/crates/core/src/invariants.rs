//! Structural invariant monitoring for live trajectories.
//!
//! Cheap checks run on every step. The minimal-false-plus-leaves count is
//! maintained incrementally: a step can only change the status of the new
//! node, its parents, the marked nodes and their parents and children, so only
//! those are reclassified. Everything that needs a full pass (degree indices,
//! the distance potential and its partition) runs every `full_every` steps and
//! once more in [`InvariantMonitor::finish`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evolution::{
    run_to_state, AdversaryStrategy, Branch, Features, RunConfig, StepObserver, StepRecord, TrialResult,
};
use crate::potentials::{leaves_potential_step_floor, potential, PotentialKind};
use crate::state::{CkpState, Label, NodeId};
use crate::structure::{self, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantKind {
    PfSoundness,
    PfFreezing,
    AdversaryLegality,
    DegreeConsistency,
    DistanceRecurrence,
    PartitionIdentity,
    PotentialLowerBound,
    LeavesIncrement,
    LeavesBookkeeping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: u64,
    pub kind: InvariantKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub steps: u64,
    pub full_checks: u64,
    pub violations: BTreeMap<InvariantKind, u64>,
    /// The first few violations verbatim.
    pub examples: Vec<Violation>,
    pub min_leaves_increment: i64,
    pub max_leaves_increment: i64,
}

impl InvariantReport {
    pub fn total_violations(&self) -> u64 {
        self.violations.values().sum()
    }

    pub fn merge(&mut self, other: &InvariantReport) {
        self.steps += other.steps;
        self.full_checks += other.full_checks;
        for (k, n) in &other.violations {
            *self.violations.entry(*k).or_insert(0) += n;
        }
        let room = MAX_EXAMPLES.saturating_sub(self.examples.len());
        self.examples.extend(other.examples.iter().take(room).cloned());
        self.min_leaves_increment = self.min_leaves_increment.min(other.min_leaves_increment);
        self.max_leaves_increment = self.max_leaves_increment.max(other.max_leaves_increment);
    }
}

const MAX_EXAMPLES: usize = 20;
pub const DEFAULT_FULL_EVERY: u64 = 100;
/// Relative tolerance for the partition identity in floating point.
pub const PARTITION_TOL: f64 = 1e-9;

pub struct InvariantMonitor {
    mode: Mode,
    r: usize,
    floor: i64,
    full_every: u64,
    in_f: Vec<bool>,
    in_l: Vec<bool>,
    phi: i64,
    was_pf: Vec<bool>,
    /// Child count of each PF node when it was marked.
    frozen_children: BTreeMap<NodeId, usize>,
    report: InvariantReport,
    last_step: u64,
}

fn leaves_count(state: &CkpState, mode: Mode) -> i64 {
    (structure::minimal_false_set(state).len() + structure::false_leaves(state, mode).len()) as i64
}

impl InvariantMonitor {
    pub fn new(state: &CkpState, features: &Features) -> Self {
        let mode = features.mode;
        let n = state.len();
        let in_f: Vec<bool> = (0..n).map(|v| structure::is_minimal_false(state, v)).collect();
        let in_l: Vec<bool> = (0..n).map(|v| structure::is_false_leaf(state, v, mode)).collect();
        let phi = in_f.iter().chain(&in_l).filter(|&&b| b).count() as i64;
        let was_pf: Vec<bool> = (0..n).map(|v| state.is_pf(v)).collect();
        let frozen_children = (0..n).filter(|&v| was_pf[v]).map(|v| (v, state.children(v).len())).collect();
        Self {
            mode,
            r: features.r,
            floor: leaves_potential_step_floor(features.m.max_m(), features.r) as i64,
            full_every: DEFAULT_FULL_EVERY,
            in_f,
            in_l,
            phi,
            was_pf,
            frozen_children,
            report: InvariantReport { min_leaves_increment: i64::MAX, max_leaves_increment: i64::MIN, ..Default::default() },
            last_step: 0,
        }
    }

    pub fn with_full_every(mut self, every: u64) -> Self {
        self.full_every = every.max(1);
        self
    }

    fn flag(&mut self, step: u64, kind: InvariantKind, detail: String) {
        *self.report.violations.entry(kind).or_insert(0) += 1;
        if self.report.examples.len() < MAX_EXAMPLES {
            self.report.examples.push(Violation { step, kind, detail });
        }
    }

    fn reclassify(&mut self, state: &CkpState, v: NodeId) {
        let f = structure::is_minimal_false(state, v);
        let l = structure::is_false_leaf(state, v, self.mode);
        self.phi += (f as i64 - self.in_f[v] as i64) + (l as i64 - self.in_l[v] as i64);
        self.in_f[v] = f;
        self.in_l[v] = l;
    }

    fn step_checks(&mut self, state: &CkpState, record: &StepRecord, t: u64) {
        let StepRecord::Added { branch, node, check, .. } = record else { return };
        let node = *node;
        let parents = state.parents(node);
        for &p in parents {
            if self.was_pf[p] {
                self.flag(t, InvariantKind::PfFreezing, format!("node {node} attached under PF node {p}"));
            }
        }
        if *branch == Branch::Adversarial && parents.len() > self.r.max(1) {
            self.flag(
                t,
                InvariantKind::AdversaryLegality,
                format!("adversarial node {node} has {} parent edges, budget {}", parents.len(), self.r),
            );
        }
        let marked: &[NodeId] = check.as_ref().map_or(&[], |c| &c.marked);
        for &m in marked {
            if !state.is_false(m) {
                self.flag(t, InvariantKind::PfSoundness, format!("true node {m} marked PF"));
            }
        }

        self.in_f.push(false);
        self.in_l.push(false);
        self.was_pf.push(false);
        let mut affected: Vec<NodeId> = Vec::with_capacity(1 + parents.len() + 4 * marked.len());
        affected.push(node);
        affected.extend_from_slice(parents);
        for &m in marked {
            affected.push(m);
            affected.extend_from_slice(state.parents(m));
            affected.extend_from_slice(state.children(m));
        }
        affected.sort_unstable();
        affected.dedup();
        let before = self.phi;
        for v in affected {
            self.reclassify(state, v);
        }
        let delta = self.phi - before;
        self.report.min_leaves_increment = self.report.min_leaves_increment.min(delta);
        self.report.max_leaves_increment = self.report.max_leaves_increment.max(delta);
        if delta < self.floor {
            self.flag(t, InvariantKind::LeavesIncrement, format!("leaves potential fell by {} (floor {})", -delta, self.floor));
        }
        for &m in marked {
            if !self.was_pf[m] {
                self.was_pf[m] = true;
                self.frozen_children.insert(m, state.children(m).len());
            }
        }
    }

    /// Full-pass checks on the current state.
    pub fn full_check(&mut self, state: &CkpState, t: u64) {
        self.report.full_checks += 1;
        if let Err(e) = state.check_consistency() {
            self.flag(t, InvariantKind::DegreeConsistency, e);
        }
        for n in state.nodes() {
            if n.label == Label::Pf && !n.is_false {
                self.flag(t, InvariantKind::PfSoundness, format!("true node {} is PF", n.id));
            }
        }
        let frozen: Vec<(NodeId, usize)> = self.frozen_children.iter().map(|(&v, &c)| (v, c)).collect();
        for (v, c) in frozen {
            if state.children(v).len() != c {
                self.flag(t, InvariantKind::PfFreezing, format!("PF node {v} gained children"));
            }
        }
        let recomputed = leaves_count(state, self.mode);
        if recomputed != self.phi {
            self.flag(
                t,
                InvariantKind::LeavesBookkeeping,
                format!("incremental leaves potential {} but recomputed {recomputed}", self.phi),
            );
            self.phi = recomputed;
        }
        let dist = structure::pt_false_distances(state);
        for v in 0..state.len() {
            let Some(d) = dist[v] else { continue };
            if d == 0 {
                continue;
            }
            let best = state.parents(v).iter().filter_map(|&p| dist[p]).min();
            if best != Some(d - 1) {
                self.flag(t, InvariantKind::DistanceRecurrence, format!("node {v} at distance {d}, parents {best:?}"));
            }
        }
        let Ok(rep) = potential(state, &PotentialKind::MinDistance { c: 3.0 }) else { return };
        if rep.total.is_finite() {
            let sum: f64 = rep.per_component.values().sum();
            if (sum - rep.total).abs() > PARTITION_TOL * rep.total.abs().max(1.0) {
                self.flag(t, InvariantKind::PartitionIdentity, format!("components sum to {sum}, total {}", rep.total));
            }
            let covered: usize = structure::components(&structure::bfs_component_partition(state))
                .values()
                .map(|c| c.len())
                .sum();
            if covered != state.pt_false_count() {
                self.flag(t, InvariantKind::PartitionIdentity, format!("components cover {covered} nodes"));
            }
        }
        if state.attachment().eval(0) >= 1.0 && rep.total < rep.pt_false_count as f64 {
            self.flag(
                t,
                InvariantKind::PotentialLowerBound,
                format!("potential {} below PT False count {}", rep.total, rep.pt_false_count),
            );
        }
    }

    pub fn finish(mut self, state: &CkpState) -> InvariantReport {
        self.full_check(state, self.last_step);
        if self.report.min_leaves_increment == i64::MAX {
            self.report.min_leaves_increment = 0;
            self.report.max_leaves_increment = 0;
        }
        self.report
    }
}

/// Runs one trajectory under a monitor and returns its result and report.
pub fn run_monitored(
    features: &Features,
    init: &CkpState,
    config: &RunConfig,
    adversary: &AdversaryStrategy,
    seed: u64,
    full_every: u64,
) -> (TrialResult, InvariantReport) {
    let mut mon = InvariantMonitor::new(init, features).with_full_every(full_every);
    let (result, state) = run_to_state(features, init, config, adversary, seed, &mut mon);
    (result, mon.finish(&state))
}

impl StepObserver for InvariantMonitor {
    fn observe(&mut self, state: &CkpState, record: &StepRecord, t: u64) {
        self.report.steps += 1;
        self.last_step = t;
        self.step_checks(state, record, t);
        if t.is_multiple_of(self.full_every) {
            self.full_check(state, t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attachment::{AttachmentFunction, CombinationFactor};
    use crate::checking::MechanismKind;
    use crate::evolution::{init_chain, AdversaryStrategy, Cadence, RunConfig};

    #[test]
    fn clean_runs_report_nothing() {
        for kind in MechanismKind::ALL {
            for m in [1, 2] {
                let f = Features::simple(AttachmentFunction::preferential(), CombinationFactor::constant(m), kind, 0.5, 3);
                let init = init_chain(AttachmentFunction::preferential(), 6, m, Label::Cf);
                let cfg = RunConfig { horizon: 150, cadence: Cadence::None };
                let (_, rep) = run_monitored(&f, &init, &cfg, &AdversaryStrategy::RandomPt, 11, 7);
                assert_eq!(rep.total_violations(), 0, "{kind} m={m}: {:?}", rep.examples);
                assert!(rep.steps > 0 && rep.full_checks > 0);
            }
        }
    }

    #[test]
    fn general_mode_with_adversary() {
        for adv in [AdversaryStrategy::RandomPt, AdversaryStrategy::DeepAttach, AdversaryStrategy::LeafAttach] {
            let f = Features::general(
                AttachmentFunction::preferential(),
                CombinationFactor::constant(2),
                MechanismKind::ParentwiseBfs,
                0.6,
                3,
                0.2,
                0.2,
                2,
            );
            let init = init_chain(AttachmentFunction::preferential(), 5, 2, Label::Cf);
            let cfg = RunConfig { horizon: 200, cadence: Cadence::None };
            let (_, rep) = run_monitored(&f, &init, &cfg, &adv, 3, 10);
            assert_eq!(rep.total_violations(), 0, "{}: {:?}", adv.name(), rep.examples);
        }
    }

    #[test]
    fn detects_tampering() {
        let f = Features::simple(
            AttachmentFunction::preferential(),
            CombinationFactor::constant(1),
            MechanismKind::Bfs,
            0.5,
            3,
        );
        let mut s = init_chain(AttachmentFunction::preferential(), 3, 1, Label::Cf);
        let mut mon = InvariantMonitor::new(&s, &f);
        // Grow a second leaf behind the monitor's back.
        s.add_node(&[0], Label::Ct, false).unwrap();
        mon.full_check(&s, 1);
        let rep = mon.finish(&s);
        assert!(rep.violations.contains_key(&InvariantKind::LeavesBookkeeping));
    }
}
