//! Closed-form sufficient conditions for elimination and survival.
//!
//! Every inequality is evaluated in rational arithmetic when the inputs have
//! short rational forms, so boundary parameters (p = 6/7 and the like) are
//! decided exactly; otherwise plain floats are used.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::attachment::AttachmentFunction;
use crate::checking::MechanismKind;
use crate::evolution::{Features, TrialResult};
use crate::exact::{max_of, Scalar};
use crate::structure::Mode;

/// Which sufficient condition produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictSource {
    /// Simple-mode elimination threshold on p.
    SimpleEliminationThreshold,
    /// General-mode elimination inequality (errors and adversary).
    GeneralEliminationInequality,
    /// Simple-mode survival threshold on p.
    SimpleSurvivalThreshold,
    /// General-mode survival inequality.
    GeneralSurvivalInequality,
    /// Checking rate below the error rate.
    CheckBelowErrorRate,
    /// Attachment growing at least cubically.
    SuperquadraticAttachment,
    /// Attachment with a zero-weight degree.
    AttachmentHoles,
}

impl VerdictSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::SimpleEliminationThreshold => "simple-elimination-threshold",
            Self::GeneralEliminationInequality => "general-elimination-inequality",
            Self::SimpleSurvivalThreshold => "simple-survival-threshold",
            Self::GeneralSurvivalInequality => "general-survival-inequality",
            Self::CheckBelowErrorRate => "check-below-error-rate",
            Self::SuperquadraticAttachment => "superquadratic-attachment",
            Self::AttachmentHoles => "attachment-holes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum TheoremVerdict {
    ProvenElimination { source: VerdictSource },
    ProvenSurvival { source: VerdictSource },
    Unknown,
}

impl TheoremVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ProvenElimination { .. } => "proven-elimination",
            Self::ProvenSurvival { .. } => "proven-survival",
            Self::Unknown => "unknown",
        }
    }

    pub fn source(&self) -> Option<VerdictSource> {
        match self {
            Self::ProvenElimination { source } | Self::ProvenSurvival { source } => Some(*source),
            Self::Unknown => None,
        }
    }

    pub fn is_elimination(&self) -> bool {
        matches!(self, Self::ProvenElimination { .. })
    }

    pub fn is_survival(&self) -> bool {
        matches!(self, Self::ProvenSurvival { .. })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerdictError {
    #[error("elimination conditions need a regular attachment function, {0} is not")]
    NotRegular(String),
    #[error("the false-fraction bound needs proven elimination with q = 0")]
    PreconditionNotProven,
    #[error("need at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(usize),
}

pub const MIN_TRIALS: usize = 30;

/// Numeric inputs to the predicates, lifted into the scalar field.
struct Inputs<S> {
    p: S,
    p_e: S,
    eps: S,
    q: S,
    r: S,
    k: S,
    a0: S,
    a1: S,
    b1: S,
    /// `None` when increments are unbounded.
    b2: Option<S>,
    mean_m: S,
    mean_recip_m: S,
    min_m: S,
}

fn lift_inputs<S: Scalar>(f: &Features) -> Option<Inputs<S>> {
    let reg = f.attach.regularity();
    let mut mean_m = S::zero();
    let mut mean_recip_m = S::zero();
    for &(v, w) in f.m.pmf() {
        let w = S::lift(w)?;
        mean_m = mean_m + S::from_count(v) * w.clone();
        mean_recip_m = mean_recip_m + w / S::from_count(v);
    }
    Some(Inputs {
        p: S::lift(f.p)?,
        p_e: S::lift(f.mechanism.noisy_detection)?,
        eps: S::lift(f.epsilon)?,
        q: S::lift(f.q)?,
        r: S::from_count(f.r),
        k: S::from_count(f.k),
        a0: S::attach(&f.attach, 0)?,
        a1: S::attach(&f.attach, 1)?,
        b1: S::lift(reg.b1)?,
        b2: if reg.b2.is_finite() { Some(S::lift(reg.b2)?) } else { None },
        mean_m,
        mean_recip_m,
        min_m: S::from_count(f.m.min_m()),
    })
}

fn half<S: Scalar>() -> S {
    S::one() / S::from_count(2)
}

fn two_thirds<S: Scalar>() -> S {
    S::from_count(2) / S::from_count(3)
}

/// Effective check probability for survival: per-edge mechanisms check each
/// of the M edges, so the rate scales by E{M}.
fn survival_rate<S: Scalar>(f: &Features, x: &Inputs<S>) -> S {
    if f.mechanism.kind.is_per_edge() {
        x.p.clone() * x.mean_m.clone()
    } else {
        x.p.clone()
    }
}

fn simple_elimination<S: Scalar>(f: &Features, x: &Inputs<S>, b: &S) -> bool {
    if f.k < 2 {
        return false;
    }
    let p = x.p.clone() * x.p_e.clone();
    if !(p > S::zero()) {
        return false;
    }
    let t = b.clone() + S::from_count(3) * x.a0.clone() * x.mean_recip_m.clone();
    let first = t.clone() / (t.clone() + two_thirds());
    let denom = ((x.k.clone() - S::one()) * x.a1.clone() + x.a0.clone()) * two_thirds();
    let second = t / denom;
    max_of(first, second) <= p
}

/// Left side of the general elimination inequality; elimination when `<= 0`.
fn general_elimination_lhs<S: Scalar>(x: &Inputs<S>, b: &S) -> S {
    let p = x.p.clone() * x.p_e.clone();
    let one = S::one();
    let two = S::from_count(2);
    let b2a0 = b.clone() + two.clone() * x.a0.clone();
    let strong = -(half::<S>() * p.clone() * ((x.k.clone() - one.clone()) * x.a1.clone() + x.a0.clone()))
        + b2a0.clone();
    let weak = -(half::<S>() * p.clone()) + b2a0 * (one.clone() - p.clone());
    let regular = (one.clone() - x.eps.clone()) * max_of(strong, weak)
        + x.eps.clone() * (b.clone() + x.a0.clone()) * (one.clone() - p);
    let adversarial = x.q.clone() * (b.clone() + two.clone()) * (x.r.clone() * b.clone() + two * x.a0.clone())
        / (x.a0.clone() + x.a1.clone());
    (one - x.q.clone()) * regular + adversarial
}

fn simple_survival<S: Scalar>(f: &Features, x: &Inputs<S>) -> bool {
    let ratio = x.mean_m.clone() / (x.min_m.clone() + S::one());
    ratio <= S::one() && survival_rate(f, x) <= half::<S>() * (S::one() - ratio)
}

fn general_survival<S: Scalar>(f: &Features, x: &Inputs<S>, b: &S) -> bool {
    let one = S::one();
    let two = S::from_count(2);
    let eta = (two.clone() * x.mean_m.clone() + x.min_m.clone() - one.clone()) / (two.clone() * (x.min_m.clone() + one.clone()));
    if !(eta <= one) {
        return false;
    }
    let p = survival_rate(f, x);
    let ba0 = b.clone() + x.a0.clone();
    let inner = p * (-two + x.eps.clone() * (one.clone() + b.clone() / ba0.clone() * eta.clone()))
        + one.clone()
        - eta * (one.clone() - x.eps.clone() * x.a0.clone() / ba0);
    (one - x.q.clone()) * inner - x.q.clone() * x.r.clone() >= S::zero()
}

fn elimination_capable(kind: MechanismKind) -> bool {
    matches!(kind, MechanismKind::ExhaustiveBfs | MechanismKind::ParentwiseBfs | MechanismKind::Complete)
}

fn survival_covered(kind: MechanismKind) -> bool {
    !matches!(kind, MechanismKind::Complete)
}

/// `Some(found)` when every regular-family condition could be evaluated in `S`.
fn derive<S: Scalar>(f: &Features, out: &mut Vec<TheoremVerdict>) -> Option<()> {
    let x = lift_inputs::<S>(f)?;
    let a0_ok = x.a0 >= S::one();
    let survival_shape = a0_ok && x.b1 >= x.a0;
    if f.mode == Mode::General && survival_rate(f, &x) < x.eps {
        out.push(TheoremVerdict::ProvenSurvival { source: VerdictSource::CheckBelowErrorRate });
    }
    if survival_covered(f.mechanism.kind) && survival_shape {
        match (f.mode, &x.b2) {
            (Mode::Simple, _) if simple_survival(f, &x) => {
                out.push(TheoremVerdict::ProvenSurvival { source: VerdictSource::SimpleSurvivalThreshold })
            }
            (Mode::General, Some(b)) if general_survival(f, &x, b) => {
                out.push(TheoremVerdict::ProvenSurvival { source: VerdictSource::GeneralSurvivalInequality })
            }
            _ => {}
        }
    }
    let eliminable = a0_ok && x.b1 >= S::zero();
    if elimination_capable(f.mechanism.kind) && eliminable {
        if let Some(b) = &x.b2 {
            match f.mode {
                Mode::Simple if simple_elimination(f, &x, b) => out.push(TheoremVerdict::ProvenElimination {
                    source: VerdictSource::SimpleEliminationThreshold,
                }),
                Mode::General if general_elimination_lhs(&x, b) <= S::zero() => {
                    out.push(TheoremVerdict::ProvenElimination {
                        source: VerdictSource::GeneralEliminationInequality,
                    })
                }
                _ => {}
            }
        }
    }
    Some(())
}

/// Every verdict whose sufficient condition holds, in evaluation order.
pub fn all_verdicts(f: &Features) -> Vec<TheoremVerdict> {
    let mut out = Vec::new();
    // The two irregular families only prove survival when checks can fail.
    if f.p < 1.0 {
        if f.attach.has_hole() {
            out.push(TheoremVerdict::ProvenSurvival { source: VerdictSource::AttachmentHoles });
        }
        if f.attach.is_superquadratic_power() {
            out.push(TheoremVerdict::ProvenSurvival { source: VerdictSource::SuperquadraticAttachment });
        }
    }
    let mut rest = Vec::new();
    if derive::<BigRational>(f, &mut rest).is_none() {
        rest.clear();
        derive::<f64>(f, &mut rest);
    }
    out.extend(rest);
    out
}

fn irregular_for_elimination(attach: &AttachmentFunction) -> bool {
    let reg = attach.regularity();
    !(reg.a0_at_least_one && reg.b1 >= 0.0 && reg.b2.is_finite())
}

/// The first verdict in evaluation order, or `Unknown`.
pub fn theorem_verdict(f: &Features) -> Result<TheoremVerdict, VerdictError> {
    if let Some(v) = all_verdicts(f).into_iter().next() {
        return Ok(v);
    }
    if elimination_capable(f.mechanism.kind) && irregular_for_elimination(&f.attach) {
        return Err(VerdictError::NotRegular(f.attach.to_string()));
    }
    Ok(TheoremVerdict::Unknown)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseFractionRow {
    pub step: u64,
    pub mean_pt_false: f64,
    pub mean_true: f64,
    /// Standard error of `pt_false - bound * true` across trials.
    pub se: f64,
    pub allowed: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseFractionReport {
    pub bound: f64,
    pub rows: Vec<FalseFractionRow>,
    pub pass: bool,
}

/// Compares trial-averaged PT False counts against `eps (1-p) a(0) / (1-eps)`
/// times the trial-averaged True counts at every shared checkpoint.
pub fn false_fraction_check(trials: &[TrialResult], f: &Features) -> Result<FalseFractionReport, VerdictError> {
    if trials.len() < MIN_TRIALS {
        return Err(VerdictError::TooFewTrials(trials.len()));
    }
    if f.q != 0.0 || !theorem_verdict(f)?.is_elimination() {
        return Err(VerdictError::PreconditionNotProven);
    }
    let bound = f.epsilon * (1.0 - f.p) * f.attach.eval(0) / (1.0 - f.epsilon);
    let n = trials.len() as f64;
    let mut rows = Vec::new();
    for (i, cp) in trials[0].checkpoints.iter().enumerate() {
        let at: Vec<_> = trials.iter().filter_map(|t| t.checkpoints.get(i).filter(|c| c.step == cp.step)).collect();
        if at.len() != trials.len() {
            continue;
        }
        let mean_pt_false = at.iter().map(|c| c.pt_false as f64).sum::<f64>() / n;
        let mean_true = at.iter().map(|c| c.true_nodes as f64).sum::<f64>() / n;
        let diffs: Vec<f64> = at.iter().map(|c| c.pt_false as f64 - bound * c.true_nodes as f64).collect();
        let mean_diff = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let allowed = bound * mean_true + 3.0 * se;
        rows.push(FalseFractionRow { step: cp.step, mean_pt_false, mean_true, se, allowed, pass: mean_pt_false <= allowed });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(FalseFractionReport { bound, rows, pass })
}
