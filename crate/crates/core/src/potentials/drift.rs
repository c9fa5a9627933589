//! One-step expected change of a potential.
//!
//! `exact_drift` walks the whole outcome tree of a single step by replaying
//! the ordinary step function against a decider that records every random
//! choice and, on each pass, takes the next untried branch. Each leaf is
//! weighted by the product of the probabilities along its path and scored by
//! recomputing the potential from scratch on the resulting state.
//!
//! The proof-internal quantities of the drift arguments (per-component hit
//! probabilities and the leaf-hit probability) are never computed on their
//! own; they are summed implicitly over the leaves.

use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{potential_value, PotentialError, PotentialKind};
use crate::attachment::{AttachError, CombinationFactor};
use crate::decider::{Decider, RngDecider};
use crate::evolution::{step, AdversaryStrategy, Features};
use crate::exact::{banded_sign, exact_sign, Scalar, Sign};
use crate::state::{CkpState, NodeId};

pub const DEFAULT_PT_CAP: usize = 12;
pub const DEFAULT_LEAF_CAP: u64 = 10_000_000;
/// Relative half-width of the float sign band.
pub const SIGN_BAND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DriftError {
    #[error("state has {0} PT nodes, above the enumeration cap {1}")]
    StateTooLarge(usize, usize),
    #[error("outcome tree exceeds {0} leaves")]
    BranchBudgetExceeded(u64),
    #[error("adversary choices cannot be enumerated")]
    AdversaryNotEnumerable,
    #[error("probability {0} has no exact rational form")]
    NotRational(f64),
    #[error("outcome probabilities sum to {0}, not 1")]
    LostMass(f64),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    /// Rational when every input has a short rational form, float otherwise.
    Auto,
    Rational,
    Float,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOptions {
    pub pt_cap: usize,
    pub leaf_cap: u64,
    pub arithmetic: Arithmetic,
    /// Consulted only when `q > 0`.
    pub adversary: AdversaryStrategy,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self {
            pt_cap: DEFAULT_PT_CAP,
            leaf_cap: DEFAULT_LEAF_CAP,
            arithmetic: Arithmetic::Auto,
            adversary: AdversaryStrategy::RandomPt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub drift: f64,
    /// `num/den` when computed in rational arithmetic.
    pub exact: Option<String>,
    pub sign: Sign,
    pub potential_before: f64,
    pub leaves: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McDrift {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

/// One recorded random choice: the values it could take with their
/// probabilities, and which one the current pass follows.
struct Choice<S> {
    options: Vec<(usize, S)>,
    taken: usize,
}

struct Branching<S> {
    path: Vec<Choice<S>>,
    cursor: usize,
    failure: Option<DriftError>,
}

impl<S: Scalar> Branching<S> {
    fn decide(&mut self, options: impl FnOnce() -> Result<Vec<(usize, S)>, DriftError>) -> usize {
        if self.cursor == self.path.len() {
            let options = match options() {
                Ok(o) if !o.is_empty() => o,
                Ok(_) => vec![(0, S::one())],
                Err(e) => {
                    self.failure.get_or_insert(e);
                    vec![(0, S::one())]
                }
            };
            self.path.push(Choice { options, taken: 0 });
        }
        let c = &self.path[self.cursor];
        self.cursor += 1;
        c.options[c.taken].0
    }

    fn weight(&self) -> S {
        self.path.iter().fold(S::one(), |acc, c| acc * c.options[c.taken].1.clone())
    }

    /// Moves to the next unexplored leaf; `false` when the tree is exhausted.
    fn advance(&mut self) -> bool {
        self.cursor = 0;
        while let Some(last) = self.path.last_mut() {
            if last.taken + 1 < last.options.len() {
                last.taken += 1;
                return true;
            }
            self.path.pop();
        }
        false
    }
}

fn lift<S: Scalar>(x: f64) -> Result<S, DriftError> {
    S::lift(x).ok_or(DriftError::NotRational(x))
}

impl<S: Scalar> Decider for Branching<S> {
    fn coin(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.decide(|| {
            let ps = lift::<S>(p)?;
            Ok(vec![(1, ps.clone()), (0, S::one() - ps)])
        }) == 1
    }

    fn uniform(&mut self, n: usize) -> usize {
        if n <= 1 {
            return 0;
        }
        self.decide(|| {
            let w = S::one() / S::from_count(n);
            Ok((0..n).map(|i| (i, w.clone())).collect())
        })
    }

    fn combination(&mut self, m: &CombinationFactor) -> usize {
        if let Some(m) = m.is_point_mass() {
            return m;
        }
        self.decide(|| m.pmf().iter().map(|&(v, p)| Ok((v, lift::<S>(p)?))).collect())
    }

    fn parent(&mut self, state: &CkpState) -> Result<NodeId, AttachError> {
        let mut weights = Vec::new();
        let mut total = S::zero();
        for v in state.pt_nodes() {
            match S::attach(state.attachment(), state.pt_degree(v)) {
                Some(w) if w > S::zero() => {
                    total = total + w.clone();
                    weights.push((v, w));
                }
                Some(_) => {}
                None => {
                    self.failure.get_or_insert(DriftError::NotRational(state.weight(v)));
                    return Err(AttachError::AllWeightsZero);
                }
            }
        }
        if weights.is_empty() {
            return Err(if state.pt_count() == 0 { AttachError::AllPf } else { AttachError::AllWeightsZero });
        }
        if weights.len() == 1 {
            return Ok(weights[0].0);
        }
        Ok(self.decide(|| Ok(weights.into_iter().map(|(v, w)| (v, w / total.clone())).collect())))
    }
}

fn enumerate<S: Scalar>(
    state: &CkpState,
    features: &Features,
    kind: &PotentialKind,
    options: &DriftOptions,
) -> Result<(S, S, u64), DriftError> {
    let before: S = potential_value(state, kind)?;
    let mut tree = Branching::<S> { path: Vec::new(), cursor: 0, failure: None };
    let mut drift = S::zero();
    let mut mass = S::zero();
    let mut leaves = 0u64;
    loop {
        leaves += 1;
        if leaves > options.leaf_cap {
            return Err(DriftError::BranchBudgetExceeded(options.leaf_cap));
        }
        let mut next = state.clone();
        let mut adversary = options.adversary.clone();
        step(&mut next, features, &mut adversary, &mut tree);
        if let Some(e) = tree.failure.take() {
            return Err(e);
        }
        let w = tree.weight();
        let after: S = potential_value(&next, kind)?;
        drift = drift + w.clone() * (after - before.clone());
        mass = mass + w;
        if !tree.advance() {
            break;
        }
    }
    let tol = if S::is_exact() { 0.0 } else { 1e-9 };
    if ((mass.to_f64()) - 1.0).abs() > tol {
        return Err(DriftError::LostMass(mass.to_f64()));
    }
    Ok((drift, before, leaves))
}

fn rational_inputs(state: &CkpState, features: &Features, kind: &PotentialKind) -> bool {
    let probs = [features.p, features.epsilon, features.q, features.mechanism.noisy_detection, 0.5];
    let c_ok = match kind {
        PotentialKind::MinDistance { c } => BigRational::lift(*c).is_some(),
        _ => true,
    };
    c_ok && probs.iter().all(|&x| BigRational::lift(x).is_some())
        && features.m.pmf().iter().all(|&(_, p)| BigRational::lift(p).is_some())
        && state.attachment().is_rational()
}

/// Exact expected one-step change of `kind` from `state`.
pub fn exact_drift(
    state: &CkpState,
    features: &Features,
    kind: &PotentialKind,
    options: &DriftOptions,
) -> Result<DriftReport, DriftError> {
    if state.pt_count() > options.pt_cap {
        return Err(DriftError::StateTooLarge(state.pt_count(), options.pt_cap));
    }
    let rational = match options.arithmetic {
        Arithmetic::Rational => true,
        Arithmetic::Float => false,
        Arithmetic::Auto => rational_inputs(state, features, kind),
    };
    if rational {
        let (drift, before, leaves) = enumerate::<BigRational>(state, features, kind, options)?;
        Ok(DriftReport {
            drift: Scalar::to_f64(&drift),
            exact: Some(drift.to_string()),
            sign: exact_sign(&drift),
            potential_before: Scalar::to_f64(&before),
            leaves,
        })
    } else {
        let (drift, before, leaves) = enumerate::<f64>(state, features, kind, options)?;
        Ok(DriftReport {
            drift,
            exact: None,
            sign: banded_sign(drift, SIGN_BAND * before.abs().max(1.0)),
            potential_before: before,
            leaves,
        })
    }
}

/// Monte Carlo estimate of the drift: mean and standard error over
/// independent one-step samples.
pub fn mc_drift<R: Rng>(
    state: &CkpState,
    features: &Features,
    kind: &PotentialKind,
    adversary: &AdversaryStrategy,
    samples: usize,
    rng: &mut R,
) -> Result<McDrift, PotentialError> {
    let before: f64 = potential_value(state, kind)?;
    let mut d = RngDecider::new(rng);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut next = state.clone();
        let mut adv = adversary.clone();
        step(&mut next, features, &mut adv, &mut d);
        let delta = potential_value::<f64>(&next, kind)? - before;
        sum += delta;
        sum_sq += delta * delta;
    }
    let n = samples as f64;
    let mean = if samples > 0 { sum / n } else { 0.0 };
    let se = if samples > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        f64::NAN
    };
    Ok(McDrift { mean, se, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attachment::AttachmentFunction;
    use crate::checking::MechanismKind;
    use crate::state::Label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simple(kind: MechanismKind, p: f64, k: usize, m: usize) -> Features {
        Features::simple(AttachmentFunction::preferential(), CombinationFactor::constant(m), kind, p, k)
    }

    fn single_cf() -> CkpState {
        CkpState::with_root(AttachmentFunction::preferential(), Label::Cf)
    }

    fn rat(s: &str) -> String {
        s.to_string()
    }

    #[test]
    fn single_cf_bfs_matches_hand_value() {
        // Caught: -1. Missed: root degree 0 -> 1 adds 1, child at distance 1 adds 3.
        for (p, expect) in [(0.5, "3/2"), (0.25, "11/4"), (0.9, "-1/2")] {
            let f = simple(MechanismKind::Bfs, p, 2, 1);
            let r = exact_drift(&single_cf(), &f, &PotentialKind::MinDistance { c: 3.0 }, &DriftOptions::default())
                .unwrap();
            assert_eq!(r.exact, Some(rat(expect)), "p = {p}");
        }
    }

    #[test]
    fn single_cf_leaves_stringy() {
        let f = simple(MechanismKind::Stringy, 0.2, 3, 1);
        let r = exact_drift(&single_cf(), &f, &PotentialKind::MinimalFalseLeavesSimple, &DriftOptions::default())
            .unwrap();
        assert_eq!(r.exact, Some(rat("3/5")));
        assert_eq!(r.sign, Sign::Positive);
    }

    #[test]
    fn chain_exhaustive_hand_value() {
        // CF -> CT with M = 1, c = 3: drift (20 - 33p) / 3.
        let mut s = single_cf();
        s.add_node(&[0], Label::Ct, false).unwrap();
        let f = simple(MechanismKind::ExhaustiveBfs, 0.5, 3, 1);
        let r = exact_drift(&s, &f, &PotentialKind::MinDistance { c: 3.0 }, &DriftOptions::default()).unwrap();
        assert_eq!(r.exact, Some(rat("7/6")));
        assert_eq!(r.potential_before, 5.0);
    }

    #[test]
    fn true_only_state_has_zero_drift() {
        let s = CkpState::with_root(AttachmentFunction::preferential(), Label::Ct);
        let f = simple(MechanismKind::Complete, 0.3, 2, 2);
        let r = exact_drift(&s, &f, &PotentialKind::MinDistance { c: 3.0 }, &DriftOptions::default()).unwrap();
        assert_eq!(r.sign, Sign::Zero);
    }

    #[test]
    fn float_mode_agrees_with_rational() {
        let mut s = single_cf();
        s.add_node(&[0], Label::Ct, false).unwrap();
        s.add_node(&[0, 1], Label::Ct, false).unwrap();
        let f = simple(MechanismKind::ParentwiseBfs, 0.7, 2, 2);
        let kind = PotentialKind::MinDistance { c: 3.0 };
        let exact = exact_drift(&s, &f, &kind, &DriftOptions::default()).unwrap();
        let float =
            exact_drift(&s, &f, &kind, &DriftOptions { arithmetic: Arithmetic::Float, ..Default::default() }).unwrap();
        assert!(exact.exact.is_some() && float.exact.is_none());
        assert!((exact.drift - float.drift).abs() < 1e-9);
        assert_eq!(exact.leaves, float.leaves);
    }

    #[test]
    fn irrational_input_falls_back_to_float() {
        let f = simple(MechanismKind::Bfs, std::f64::consts::FRAC_1_SQRT_2, 2, 1);
        let r = exact_drift(&single_cf(), &f, &PotentialKind::MinDistance { c: 3.0 }, &DriftOptions::default())
            .unwrap();
        assert!(r.exact.is_none());
        assert!((r.drift - (4.0 - 5.0 * f.p)).abs() < 1e-12);
    }

    #[test]
    fn caps_are_enforced() {
        let mut s = CkpState::with_root(AttachmentFunction::preferential(), Label::Ct);
        for i in 1..5 {
            s.add_node(&[i - 1], Label::Ct, false).unwrap();
        }
        let f = simple(MechanismKind::Bfs, 0.5, 2, 1);
        let kind = PotentialKind::MinDistance { c: 3.0 };
        let small = DriftOptions { pt_cap: 3, ..Default::default() };
        assert_eq!(exact_drift(&s, &f, &kind, &small), Err(DriftError::StateTooLarge(5, 3)));
        let tiny = DriftOptions { leaf_cap: 2, ..Default::default() };
        assert_eq!(exact_drift(&s, &f, &kind, &tiny), Err(DriftError::BranchBudgetExceeded(2)));
    }

    #[test]
    fn monte_carlo_is_close_and_repeatable() {
        let f = simple(MechanismKind::Bfs, 0.5, 2, 1);
        let kind = PotentialKind::MinDistance { c: 3.0 };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            mc_drift(&single_cf(), &f, &kind, &AdversaryStrategy::RandomPt, 100_000, &mut rng).unwrap()
        };
        let a = run(5);
        assert!((a.mean - 1.5).abs() < 0.05, "{a:?}");
        assert_eq!(a, run(5));
        // Two outcomes, -1 and 4, each with probability 1/2: sd 2.5.
        assert!((a.se - 2.5 / (1e5f64).sqrt()).abs() < 1e-3);
    }
}
