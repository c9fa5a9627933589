//! Per-step dynamics, adversaries, initial states and trajectory runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attachment::{AttachmentFunction, CombinationFactor};
use crate::checking::{run_check, CheckMechanism, CheckOutcome, CheckParams, MarkingScope, MechanismKind};
use crate::decider::{Decider, RngDecider};
use crate::state::{CkpState, Label, NodeId};
use crate::structure::{self, Mode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid features: {0}")]
pub struct FeatureError(pub String);

/// The full parameter vector of a process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub attach: AttachmentFunction,
    pub m: CombinationFactor,
    pub epsilon: f64,
    pub q: f64,
    pub r: usize,
    pub p: f64,
    pub k: usize,
    pub mechanism: CheckMechanism,
    pub mode: Mode,
    #[serde(default)]
    pub scope: MarkingScope,
}

impl Features {
    /// No errors after the start and no adversary.
    pub fn simple(attach: AttachmentFunction, m: CombinationFactor, kind: MechanismKind, p: f64, k: usize) -> Self {
        Self {
            attach,
            m,
            epsilon: 0.0,
            q: 0.0,
            r: 0,
            p,
            k,
            mechanism: CheckMechanism::new(kind),
            mode: Mode::Simple,
            scope: MarkingScope::Descendants,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn general(
        attach: AttachmentFunction,
        m: CombinationFactor,
        kind: MechanismKind,
        p: f64,
        k: usize,
        epsilon: f64,
        q: f64,
        r: usize,
    ) -> Self {
        Self { epsilon, q, r, mode: Mode::General, ..Self::simple(attach, m, kind, p, k) }
    }

    pub fn with_noisy_detection(mut self, p_e: f64) -> Self {
        self.mechanism.noisy_detection = p_e;
        self
    }

    pub fn check_params(&self) -> CheckParams {
        CheckParams { k: self.k, p: self.p, p_e: self.mechanism.noisy_detection, scope: self.scope }
    }

    /// Probabilities in `[0, 1]` (p = 1 is allowed for grid endpoints), `k >= 1`,
    /// a legal adversary budget, and zero error/adversary rates in simple mode.
    pub fn validate(&self) -> Result<(), FeatureError> {
        let prob = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(FeatureError(format!("{name} = {x} is not a probability")))
            }
        };
        prob("p", self.p)?;
        prob("epsilon", self.epsilon)?;
        prob("q", self.q)?;
        let pe = self.mechanism.noisy_detection;
        if !(pe > 0.0 && pe <= 1.0) {
            return Err(FeatureError(format!("p_e = {pe} must lie in (0, 1]")));
        }
        if self.k == 0 {
            return Err(FeatureError("k must be at least 1".into()));
        }
        if self.mode == Mode::Simple && (self.epsilon != 0.0 || self.q != 0.0) {
            return Err(FeatureError("simple mode requires epsilon = 0 and q = 0".into()));
        }
        if self.q > 0.0 && self.r == 0 {
            return Err(FeatureError("an adversary with q > 0 needs r >= 1 parent edges".into()));
        }
        self.attach.validate().map_err(|e| FeatureError(e.0))?;
        Ok(())
    }
}

/// One scripted adversarial move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedMove {
    pub parents: Vec<NodeId>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AdversaryStrategy {
    /// `r` edges to the PT False node farthest from the minimal false set.
    DeepAttach,
    /// Up to `r` distinct CT non-root leaves, false ones first.
    LeafAttach,
    /// `r` uniform PT picks and a fair-coin label.
    RandomPt,
    /// Explicit moves, replayed cyclically. Illegal parents are dropped and
    /// the move is truncated to `r` edges.
    Scripted { moves: Vec<ScriptedMove>, cursor: usize },
}

impl AdversaryStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DeepAttach => "deep-attach",
            Self::LeafAttach => "leaf-attach",
            Self::RandomPt => "random-pt",
            Self::Scripted { .. } => "scripted",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "deep-attach" => Ok(Self::DeepAttach),
            "leaf-attach" => Ok(Self::LeafAttach),
            "random-pt" => Ok(Self::RandomPt),
            other => Err(format!("unknown adversary {other:?}; expected deep-attach, leaf-attach or random-pt")),
        }
    }

    /// Parents and label of the adversarial node, or `None` when no PT node exists.
    pub fn choose<D: Decider>(
        &mut self,
        state: &CkpState,
        r: usize,
        mode: Mode,
        d: &mut D,
    ) -> Option<(Vec<NodeId>, Label)> {
        let first_pt = state.pt_nodes().next()?;
        let r = r.max(1);
        match self {
            Self::DeepAttach => {
                let dist = structure::pt_false_distances(state);
                let mut best: Option<(usize, NodeId)> = None;
                for (v, dv) in dist.iter().enumerate() {
                    if let Some(dv) = *dv {
                        if best.is_none_or(|(bd, _)| dv > bd) {
                            best = Some((dv, v));
                        }
                    }
                }
                let target = best.map_or(first_pt, |(_, v)| v);
                Some((vec![target; r], Label::Ct))
            }
            Self::LeafAttach => {
                let leaves = structure::ct_nonroot_leaves(state, mode);
                let mut picks: Vec<NodeId> = leaves.iter().copied().filter(|&v| state.is_false(v)).collect();
                picks.extend(leaves.iter().copied().filter(|&v| !state.is_false(v)));
                picks.truncate(r);
                if picks.is_empty() {
                    picks.push(first_pt);
                }
                Some((picks, Label::Ct))
            }
            Self::RandomPt => {
                let pts: Vec<NodeId> = state.pt_nodes().collect();
                let parents = (0..r).map(|_| pts[d.uniform(pts.len())]).collect();
                let label = if d.coin(0.5) { Label::Cf } else { Label::Ct };
                Some((parents, label))
            }
            Self::Scripted { moves, cursor } => {
                if moves.is_empty() {
                    return Some((vec![first_pt], Label::Ct));
                }
                let mv = &moves[*cursor % moves.len()];
                *cursor += 1;
                let mut parents: Vec<NodeId> =
                    mv.parents.iter().copied().filter(|&u| u < state.len() && state.is_pt(u)).collect();
                parents.truncate(r);
                if parents.is_empty() {
                    parents.push(first_pt);
                }
                let label = if mv.label == Label::Cf { Label::Cf } else { Label::Ct };
                Some((parents, label))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Regular,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepRecord {
    /// No legal parent: the state is left unchanged.
    Stopped { branch: Branch },
    Added { branch: Branch, node: NodeId, label: Label, check: Option<CheckOutcome> },
}

impl StepRecord {
    pub fn is_stopped(&self) -> bool {
        matches!(self, StepRecord::Stopped { .. })
    }

    pub fn marked(&self) -> &[NodeId] {
        match self {
            StepRecord::Added { check: Some(c), .. } => &c.marked,
            _ => &[],
        }
    }

    pub fn new_node(&self) -> Option<NodeId> {
        match self {
            StepRecord::Added { node, .. } => Some(*node),
            StepRecord::Stopped { .. } => None,
        }
    }
}

/// Advances the state by one step.
pub fn step<D: Decider>(
    state: &mut CkpState,
    features: &Features,
    adversary: &mut AdversaryStrategy,
    d: &mut D,
) -> StepRecord {
    if d.coin(features.q) {
        let branch = Branch::Adversarial;
        let Some((parents, label)) = adversary.choose(state, features.r, features.mode, d) else {
            return StepRecord::Stopped { branch };
        };
        state.advance_step();
        let node = state.add_node(&parents, label, true).expect("adversary picks PT parents");
        return StepRecord::Added { branch, node, label, check: None };
    }
    let branch = Branch::Regular;
    if state.pt_count() == 0 || !(state.total_attachment_weight() > 0.0) {
        return StepRecord::Stopped { branch };
    }
    let m = d.combination(&features.m);
    let mut parents = Vec::with_capacity(m);
    for _ in 0..m {
        match d.parent(state) {
            Ok(u) => parents.push(u),
            Err(_) => return StepRecord::Stopped { branch },
        }
    }
    let label = if d.coin(features.epsilon) { Label::Cf } else { Label::Ct };
    state.advance_step();
    let node = state.add_node(&parents, label, false).expect("sampled parents are PT");
    let check = run_check(state, node, features.mechanism.kind, &features.check_params(), d);
    state.apply_marks(&check.marked).expect("checks only condemn false nodes");
    StepRecord::Added { branch, node, label, check: Some(check) }
}

/// `n` nodes in a line: node 0 gets `first_label`, every later node is CT with
/// `m` parallel edges to its predecessor.
pub fn init_chain(attach: AttachmentFunction, n: usize, m: usize, first_label: Label) -> CkpState {
    assert!(n >= 1 && m >= 1, "a chain needs n >= 1 and m >= 1");
    let mut s = CkpState::with_root(attach, first_label);
    for i in 1..n {
        s.add_node(&vec![i - 1; m], Label::Ct, false).expect("chain parents are PT");
    }
    s
}

/// Counts recorded at a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: u64,
    pub nodes: usize,
    pub pt: usize,
    pub pt_false: usize,
    pub pf: usize,
    pub true_nodes: usize,
    pub minimal_false: usize,
    pub leaves: usize,
}

impl Checkpoint {
    pub fn of(state: &CkpState, step: u64, mode: Mode) -> Self {
        Self {
            step,
            nodes: state.len(),
            pt: state.pt_count(),
            pt_false: state.pt_false_count(),
            pf: state.pf_count(),
            true_nodes: state.true_count(),
            minimal_false: structure::minimal_false_set(state).len(),
            leaves: structure::ct_nonroot_leaves(state, mode).len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Start of the final stretch with no PT False node, if the run ends in one.
    pub eliminated_at: Option<u64>,
    pub survived_at_horizon: bool,
    /// Literal reading of "survived": some PF node exists at the horizon.
    pub pf_exists_at_horizon: bool,
    pub checkpoints: Vec<Checkpoint>,
    pub seed: u64,
}

/// When to record checkpoints during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cadence {
    #[default]
    None,
    Every(u64),
    At(Vec<u64>),
}

impl Cadence {
    fn hits(&self, t: u64) -> bool {
        match self {
            Cadence::None => false,
            Cadence::Every(n) => *n > 0 && t > 0 && t.is_multiple_of(*n),
            Cadence::At(ts) => ts.contains(&t),
        }
    }
}

/// Hook invoked after every step of a run.
pub trait StepObserver {
    fn observe(&mut self, state: &CkpState, record: &StepRecord, t: u64);
}

impl StepObserver for () {
    fn observe(&mut self, _: &CkpState, _: &StepRecord, _: u64) {}
}

impl<F: FnMut(&CkpState, &StepRecord, u64)> StepObserver for F {
    fn observe(&mut self, state: &CkpState, record: &StepRecord, t: u64) {
        self(state, record, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub horizon: u64,
    pub cadence: Cadence,
}

/// Runs `horizon` steps from `init`. Simple-mode runs exit early once no PT
/// node is left, since that state is absorbing.
pub fn run(
    features: &Features,
    init: &CkpState,
    config: &RunConfig,
    adversary: &AdversaryStrategy,
    seed: u64,
) -> TrialResult {
    run_observed(features, init, config, adversary, seed, &mut ())
}

pub fn run_observed<O: StepObserver>(
    features: &Features,
    init: &CkpState,
    config: &RunConfig,
    adversary: &AdversaryStrategy,
    seed: u64,
    observer: &mut O,
) -> TrialResult {
    run_to_state(features, init, config, adversary, seed, observer).0
}

/// Like [`run_observed`], also returning the final state.
pub fn run_to_state<O: StepObserver>(
    features: &Features,
    init: &CkpState,
    config: &RunConfig,
    adversary: &AdversaryStrategy,
    seed: u64,
    observer: &mut O,
) -> (TrialResult, CkpState) {
    let mut state = init.clone();
    let mut adversary = adversary.clone();
    let mut d = RngDecider::new(ChaCha8Rng::seed_from_u64(seed));
    let mut checkpoints = Vec::new();
    if config.cadence.hits(0) {
        checkpoints.push(Checkpoint::of(&state, 0, features.mode));
    }
    let mut zero_since: Option<u64> = (state.pt_false_count() == 0).then_some(0);
    let mut t = 0;
    while t < config.horizon {
        let record = step(&mut state, features, &mut adversary, &mut d);
        t += 1;
        observer.observe(&state, &record, t);
        if state.pt_false_count() == 0 {
            zero_since.get_or_insert(t);
        } else {
            zero_since = None;
        }
        if config.cadence.hits(t) {
            checkpoints.push(Checkpoint::of(&state, t, features.mode));
        }
        if features.mode == Mode::Simple && state.pt_count() == 0 {
            break;
        }
    }
    if t < config.horizon {
        // Absorbed early: later checkpoints repeat the frozen state.
        let frozen = Checkpoint::of(&state, t, features.mode);
        for s in t + 1..=config.horizon {
            if config.cadence.hits(s) {
                checkpoints.push(Checkpoint { step: s, ..frozen.clone() });
            }
        }
    }
    let result = TrialResult {
        eliminated_at: zero_since,
        survived_at_horizon: state.pt_false_count() > 0,
        pf_exists_at_horizon: state.pf_count() > 0,
        checkpoints,
        seed,
    };
    (result, state)
}

/// One line of a JSON-lines trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub step: u64,
    pub branch: Branch,
    pub stopped: bool,
    pub node: Option<NodeId>,
    pub label: Option<Label>,
    pub checked: bool,
    pub found: Vec<NodeId>,
    pub marked: Vec<NodeId>,
    pub nodes: usize,
    pub pt: usize,
    pub pt_false: usize,
    pub pf: usize,
}

impl TraceLine {
    pub fn of(state: &CkpState, record: &StepRecord, t: u64) -> Self {
        let (branch, stopped, node, label, check) = match record {
            StepRecord::Stopped { branch } => (*branch, true, None, None, None),
            StepRecord::Added { branch, node, label, check } => (*branch, false, Some(*node), Some(*label), check.as_ref()),
        };
        Self {
            step: t,
            branch,
            stopped,
            node,
            label,
            checked: check.is_some_and(|c| c.any_performed()),
            found: check.map(|c| c.found.clone()).unwrap_or_default(),
            marked: check.map(|c| c.marked.clone()).unwrap_or_default(),
            nodes: state.len(),
            pt: state.pt_count(),
            pt_false: state.pt_false_count(),
            pf: state.pf_count(),
        }
    }
}

/// Distinct states met along simulated trajectories from `init` that have at
/// most `max_pt` PT nodes and at least one PT False node. Trajectory `i` uses
/// `derive_seed(seed, [i])` and is abandoned once it outgrows `max_pt`; at most
/// `want * 50` trajectories are tried.
pub fn sample_reachable_states(
    features: &Features,
    init: &CkpState,
    want: usize,
    max_pt: usize,
    seed: u64,
) -> Vec<CkpState> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    let key = |s: &CkpState| {
        s.nodes().iter().map(|n| (n.label, n.is_false, n.parents.clone())).collect::<Vec<_>>()
    };
    let mut consider = |s: &CkpState, out: &mut Vec<CkpState>| {
        if s.pt_count() <= max_pt && s.pt_false_count() > 0 && seen.insert(key(s)) {
            out.push(s.clone());
        }
    };
    consider(init, &mut out);
    for i in 0..(want as u64).saturating_mul(50) {
        if out.len() >= want {
            break;
        }
        let mut state = init.clone();
        let mut adversary = AdversaryStrategy::RandomPt;
        let mut d = RngDecider::new(ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i])));
        loop {
            if step(&mut state, features, &mut adversary, &mut d).is_stopped() {
                break;
            }
            if state.pt_count() > max_pt || state.pt_false_count() == 0 {
                break;
            }
            consider(&state, &mut out);
            if out.len() >= want {
                break;
            }
        }
    }
    out
}

/// Mixes a base seed with any number of words (splitmix64 finalizer per word).
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    words.iter().fold(mix(base), |acc, &w| mix(acc ^ mix(w)))
}
