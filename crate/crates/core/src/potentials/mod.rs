//! Potentials over process states, their component decomposition, and
//! one-step drift (exact enumeration and Monte Carlo).

mod drift;
mod verdict;

pub use drift::{
    exact_drift, mc_drift, Arithmetic, DriftError, DriftOptions, DriftReport, McDrift, DEFAULT_LEAF_CAP, DEFAULT_PT_CAP,
    SIGN_BAND,
};
pub use verdict::{
    all_verdicts, false_fraction_check, theorem_verdict, FalseFractionReport, FalseFractionRow, TheoremVerdict,
    VerdictError, VerdictSource, MIN_TRIALS,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::exact::Scalar;
use crate::state::{CkpState, Label, NodeId};
use crate::structure::{self, Mode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    /// Sum of `a(deg) * c^dist` over PT False nodes.
    MinDistance { c: f64 },
    /// Number of minimal false nodes.
    MinimalFalse,
    /// Minimal false nodes plus False CT non-root leaves (simple leaf definition).
    MinimalFalseLeavesSimple,
    /// Within the sub-DAG below `anchor`: minimal false nodes plus
    /// `a(0) / a(deg_CF)` per CT non-root leaf (general leaf definition).
    MinimalFalseLeavesGeneral { anchor: NodeId },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("the distance base c must exceed 1, got {0}")]
    BadBase(f64),
    #[error("anchor {0} is not a node born CF")]
    BadAnchor(NodeId),
    #[error("leaf {0} has attachment weight zero")]
    NonpositiveWeight(NodeId),
    #[error("input {0} has no exact rational form")]
    NotRational(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub total: f64,
    /// Component sums keyed by anchor; only filled for the distance potential.
    pub per_component: BTreeMap<NodeId, f64>,
    pub pt_false_count: usize,
}

/// Evaluates a potential in floating point, with its component breakdown.
pub fn potential(state: &CkpState, kind: &PotentialKind) -> Result<PotentialReport, PotentialError> {
    let mut per_component = BTreeMap::new();
    let total = match kind {
        PotentialKind::MinDistance { c } => {
            let terms = distance_terms::<f64>(state, *c)?;
            let partition = structure::bfs_component_partition(state);
            let mut total = 0.0;
            for (v, term) in terms {
                total += term;
                let anchor = partition[v].expect("PT False nodes have an anchor");
                *per_component.entry(anchor).or_insert(0.0) += term;
            }
            total
        }
        _ => potential_value::<f64>(state, kind)?,
    };
    Ok(PotentialReport { total, per_component, pt_false_count: state.pt_false_count() })
}

/// Per-node terms `a(deg) * c^dist` in id order.
fn distance_terms<S: Scalar>(state: &CkpState, c: f64) -> Result<Vec<(NodeId, S)>, PotentialError> {
    if !(c > 1.0) {
        return Err(PotentialError::BadBase(c));
    }
    let cs = S::lift(c).ok_or(PotentialError::NotRational("c"))?;
    let dist = structure::pt_false_distances(state);
    let mut powers: Vec<S> = vec![S::one()];
    let mut out = Vec::new();
    for (v, d) in dist.iter().enumerate() {
        let Some(d) = *d else { continue };
        while powers.len() <= d {
            let next = powers[powers.len() - 1].clone() * cs.clone();
            powers.push(next);
        }
        let a = S::attach(state.attachment(), state.pt_degree(v)).ok_or(PotentialError::NotRational("attachment"))?;
        out.push((v, a * powers[d].clone()));
    }
    Ok(out)
}

/// A node known to have been born CF: labeled CF, or PF with no false parent.
fn is_cf_born(state: &CkpState, v: NodeId) -> bool {
    let n = state.node(v);
    n.is_false && (n.label == Label::Cf || !n.parents.iter().any(|&p| state.is_false(p)))
}

/// Total value of a potential in the scalar field `S`.
pub fn potential_value<S: Scalar>(state: &CkpState, kind: &PotentialKind) -> Result<S, PotentialError> {
    match kind {
        PotentialKind::MinDistance { c } => {
            Ok(distance_terms::<S>(state, *c)?.into_iter().fold(S::zero(), |acc, (_, t)| acc + t))
        }
        PotentialKind::MinimalFalse => Ok(S::from_count(structure::minimal_false_set(state).len())),
        PotentialKind::MinimalFalseLeavesSimple => Ok(S::from_count(
            structure::minimal_false_set(state).len() + structure::false_leaves(state, Mode::Simple).len(),
        )),
        PotentialKind::MinimalFalseLeavesGeneral { anchor } => {
            let anchor = *anchor;
            if anchor >= state.len() || !is_cf_born(state, anchor) {
                return Err(PotentialError::BadAnchor(anchor));
            }
            let inside = structure::descendant_closure(state, anchor);
            let a = state.attachment();
            let a0 = S::attach(a, 0).ok_or(PotentialError::NotRational("attachment"))?;
            let mut total = S::zero();
            for v in anchor..state.len() {
                if !inside[v] {
                    continue;
                }
                if structure::is_minimal_false(state, v) {
                    total = total + S::one();
                } else if structure::is_leaf(state, v, Mode::General) {
                    let w = S::attach(a, state.cf_degree(v)).ok_or(PotentialError::NotRational("attachment"))?;
                    if !(w > S::zero()) {
                        return Err(PotentialError::NonpositiveWeight(v));
                    }
                    total = total + a0.clone() / w;
                }
            }
            Ok(total)
        }
    }
}

/// Lower bound on one-step change of the leaves potential: the largest
/// single-step loss any mechanism or adversary move can cause.
pub fn leaves_potential_step_floor(max_m: usize, r: usize) -> f64 {
    let worst = [2, 1 + max_m, 2 * max_m, r].into_iter().max().unwrap_or(2);
    -(worst as f64)
}
