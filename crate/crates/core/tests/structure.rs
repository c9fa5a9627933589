//! Distances, the component partition and the distance potential checked
//! against literal re-implementations on sampled reachable states.

use std::collections::{HashSet, VecDeque};

use proptest::prelude::*;

use ckp::attachment::{AttachmentFunction, CombinationFactor};
use ckp::checking::MechanismKind;
use ckp::evolution::{init_chain, sample_reachable_states, Features};
use ckp::potentials::{potential, PotentialKind};
use ckp::state::{CkpState, Label, NodeId};
use ckp::structure::{bfs_component_partition, is_minimal_false, minimal_false_set, pt_false_distances};

fn states(kind: MechanismKind, m: usize, k: usize, general: bool, seed: u64) -> Vec<CkpState> {
    let attach = AttachmentFunction::preferential();
    let cm = CombinationFactor::constant(m);
    let (f, init) = if general {
        (Features::general(attach.clone(), cm, kind, 0.5, k, 0.3, 0.2, 2), init_chain(attach, 1, 1, Label::Ct))
    } else {
        (Features::simple(attach.clone(), cm, kind, 0.5, k), CkpState::with_root(attach, Label::Cf))
    };
    sample_reachable_states(&f, &init, 8, 14, seed)
}

/// Shortest upward path to a minimal false node by exhaustive path search.
fn brute_distance(s: &CkpState, v: NodeId) -> Option<usize> {
    if !(s.is_pt(v) && s.is_false(v)) {
        return None;
    }
    fn go(s: &CkpState, v: NodeId, depth: usize, best: &mut Option<usize>) {
        if best.is_some_and(|b| depth >= b) {
            return;
        }
        if is_minimal_false(s, v) {
            *best = Some(depth);
            return;
        }
        for &p in s.parents(v) {
            if s.is_pt(p) && s.is_false(p) {
                go(s, p, depth + 1, best);
            }
        }
    }
    let mut best = None;
    go(s, v, 0, &mut best);
    best
}

/// The anchor met first by a FIFO upward BFS from `v`, parents in insertion order.
fn literal_anchor(s: &CkpState, v: NodeId) -> Option<NodeId> {
    if !(s.is_pt(v) && s.is_false(v)) {
        return None;
    }
    let mut seen = HashSet::from([v]);
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        if is_minimal_false(s, u) {
            return Some(u);
        }
        for &p in s.parents(u) {
            if s.is_pt(p) && s.is_false(p) && seen.insert(p) {
                queue.push_back(p);
            }
        }
    }
    None
}

fn kind_strategy() -> impl Strategy<Value = MechanismKind> {
    prop::sample::select(MechanismKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distances_match_path_search(kind in kind_strategy(), m in 1usize..=3, k in 1usize..=4, general: bool, seed: u64) {
        for s in states(kind, m, k, general, seed) {
            let dist = pt_false_distances(&s);
            for v in 0..s.len() {
                prop_assert_eq!(dist[v], brute_distance(&s, v), "node {}", v);
            }
        }
    }

    #[test]
    fn partition_matches_literal_bfs(kind in kind_strategy(), m in 1usize..=3, k in 1usize..=4, general: bool, seed: u64) {
        for s in states(kind, m, k, general, seed) {
            let part = bfs_component_partition(&s);
            for v in 0..s.len() {
                prop_assert_eq!(part[v], literal_anchor(&s, v), "node {}", v);
            }
        }
    }

    #[test]
    fn distance_potential_decomposes(kind in kind_strategy(), m in 1usize..=3, general: bool, seed: u64, c in 1.5f64..4.0) {
        for s in states(kind, m, 3, general, seed) {
            let r = potential(&s, &PotentialKind::MinDistance { c }).unwrap();
            let sum: f64 = r.per_component.values().sum();
            prop_assert!((r.total - sum).abs() <= 1e-9 * r.total.abs().max(1.0));
            prop_assert!(r.total >= r.pt_false_count as f64);
            let anchors: Vec<NodeId> = r.per_component.keys().copied().collect();
            let minimal = minimal_false_set(&s).members();
            prop_assert!(anchors.iter().all(|a| minimal.contains(a)));
        }
    }

    #[test]
    fn sampled_states_are_consistent(kind in kind_strategy(), m in 1usize..=3, general: bool, seed: u64) {
        let got = states(kind, m, 3, general, seed);
        for s in &got {
            prop_assert!(s.check_consistency().is_ok());
            prop_assert!(s.pt_count() <= 14 && s.pt_false_count() > 0);
        }
        let keys: HashSet<String> = got.iter().map(|s| format!("{:?}", s.nodes())).collect();
        prop_assert_eq!(keys.len(), got.len());
    }
}
