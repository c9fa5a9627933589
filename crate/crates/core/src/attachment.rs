//! Attachment functions `a(d)`, the combination factor `M`, and parent selection.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exact::rationalize;
use crate::state::{CkpState, NodeId};

/// Sweep length used when a closed form for the increment bounds is unavailable.
const REGULARITY_SWEEP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttachError {
    #[error("no proclaimed-true node exists")]
    AllPf,
    #[error("every proclaimed-true node has attachment weight zero")]
    AllWeightsZero,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ParseError(pub String);

/// Weight given to a prospective parent with `d` proclaimed-true children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttachmentFunction {
    /// `a0 + slope * d`
    Affine { a0: f64, slope: f64 },
    /// `a0 * (d + 1)^exponent`
    PowerShifted { a0: f64, exponent: f64 },
    /// Explicit values, continued affinely past the last entry.
    Table { values: Vec<f64>, tail_slope: f64 },
}

/// Increment bounds of an attachment function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    /// inf of a(d+1) - a(d)
    pub b1: f64,
    /// sup of a(d+1) - a(d); infinite when unbounded
    pub b2: f64,
    pub a0_at_least_one: bool,
}

impl Regularity {
    /// `(b1, b2)`-regular in the strict sense: finite bounds, nonnegative
    /// increments and `a(0) >= 1`.
    pub fn is_regular(&self) -> bool {
        self.a0_at_least_one && self.b1 >= 0.0 && self.b2.is_finite()
    }
}

impl AttachmentFunction {
    pub fn preferential() -> Self {
        Self::Affine { a0: 1.0, slope: 1.0 }
    }

    pub fn uniform() -> Self {
        Self::Affine { a0: 1.0, slope: 0.0 }
    }

    /// `a(0) = 1`, `a(d) = 0` afterwards.
    pub fn holes() -> Self {
        Self::Table { values: vec![1.0, 0.0], tail_slope: 0.0 }
    }

    pub fn eval(&self, d: usize) -> f64 {
        let w = match self {
            Self::Affine { a0, slope } => a0 + slope * d as f64,
            Self::PowerShifted { a0, exponent } => a0 * ((d + 1) as f64).powf(*exponent),
            Self::Table { values, tail_slope } => {
                let last = values.len() - 1;
                if d <= last {
                    values[d]
                } else {
                    values[last] + tail_slope * (d - last) as f64
                }
            }
        };
        w.max(0.0)
    }

    /// Exact value when every parameter is a short rational and the exponent
    /// (if any) is a nonnegative integer.
    pub fn eval_rational(&self, d: usize) -> Option<BigRational> {
        let w = match self {
            Self::Affine { a0, slope } => {
                rationalize(*a0)? + rationalize(*slope)? * BigRational::from_integer(d.into())
            }
            Self::PowerShifted { a0, exponent } => {
                if exponent.fract() != 0.0 || *exponent < 0.0 || *exponent > 64.0 {
                    return None;
                }
                let base = BigInt::from(d + 1);
                rationalize(*a0)? * BigRational::from_integer(num_traits::pow(base, *exponent as usize))
            }
            Self::Table { values, tail_slope } => {
                let last = values.len() - 1;
                if d <= last {
                    rationalize(values[d])?
                } else {
                    rationalize(values[last])?
                        + rationalize(*tail_slope)? * BigRational::from_integer((d - last).into())
                }
            }
        };
        Some(if w.is_negative() { BigRational::zero() } else { w })
    }

    /// True when `eval_rational` succeeds for every degree.
    pub fn is_rational(&self) -> bool {
        match self {
            Self::Affine { a0, slope } => rationalize(*a0).is_some() && rationalize(*slope).is_some(),
            Self::PowerShifted { a0, exponent } => {
                rationalize(*a0).is_some() && exponent.fract() == 0.0 && (0.0..=64.0).contains(exponent)
            }
            Self::Table { values, tail_slope } => {
                values.iter().all(|v| rationalize(*v).is_some()) && rationalize(*tail_slope).is_some()
            }
        }
    }

    pub fn regularity(&self) -> Regularity {
        let a0 = self.eval(0);
        let (b1, b2) = match self {
            Self::Affine { slope, a0 } => {
                if *slope >= 0.0 || *a0 <= 0.0 {
                    (*slope, *slope)
                } else {
                    self.sweep_increments()
                }
            }
            Self::PowerShifted { a0, exponent } => {
                // Increments grow without bound for exponent > 1 and shrink
                // toward zero for exponent < 1.
                let first = a0 * (2f64.powf(*exponent) - 1.0);
                if *exponent > 1.0 {
                    (first, f64::INFINITY)
                } else if *exponent == 1.0 {
                    (*a0, *a0)
                } else {
                    (0f64.min(first), first.max(0.0))
                }
            }
            Self::Table { .. } => self.sweep_increments(),
        };
        Regularity { b1, b2, a0_at_least_one: a0 >= 1.0 }
    }

    fn sweep_increments(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut prev = self.eval(0);
        for d in 1..=REGULARITY_SWEEP {
            let cur = self.eval(d);
            lo = lo.min(cur - prev);
            hi = hi.max(cur - prev);
            prev = cur;
        }
        (lo, hi)
    }

    /// Some degree receives weight zero, so a node can become unselectable.
    pub fn has_hole(&self) -> bool {
        match self {
            Self::Affine { a0, slope } => *a0 <= 0.0 || *slope < 0.0,
            Self::PowerShifted { a0, .. } => *a0 <= 0.0,
            Self::Table { values, tail_slope } => {
                values.iter().any(|v| *v <= 0.0) || *tail_slope < 0.0
            }
        }
    }

    /// Growth at least cubic in the degree.
    pub fn is_superquadratic_power(&self) -> bool {
        matches!(self, Self::PowerShifted { a0, exponent } if *a0 > 0.0 && *exponent >= 3.0)
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            Self::Affine { a0, slope } if !finite_nonneg(*a0) || !slope.is_finite() => {
                Err(ParseError("affine parameters must be finite with a0 >= 0".into()))
            }
            Self::PowerShifted { a0, exponent } if !finite_nonneg(*a0) || !(*exponent > 0.0) => {
                Err(ParseError("power needs a0 >= 0 and a positive exponent".into()))
            }
            Self::Table { values, .. } if values.is_empty() => {
                Err(ParseError("table needs at least one value".into()))
            }
            Self::Table { values, tail_slope }
                if !values.iter().all(|v| finite_nonneg(*v)) || !tail_slope.is_finite() =>
            {
                Err(ParseError("table values must be finite and nonnegative".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AttachmentFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Affine { a0, slope } => write!(f, "affine({a0}, {slope})"),
            Self::PowerShifted { a0, exponent } => write!(f, "power({a0}, {exponent})"),
            Self::Table { values, tail_slope } => {
                let vs: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "table({}; {tail_slope})", vs.join(", "))
            }
        }
    }
}

fn parse_call<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    let rest = s.trim().strip_prefix(name)?.trim_start();
    rest.strip_prefix('(')?.strip_suffix(')')
}

fn parse_f64(s: &str) -> Result<f64, ParseError> {
    s.trim().parse::<f64>().map_err(|_| ParseError(format!("not a number: {:?}", s.trim())))
}

impl FromStr for AttachmentFunction {
    type Err = ParseError;

    /// `affine(a0, slope) | power(a0, e) | table(v0, v1, ...; tail_slope)`,
    /// plus the shorthands `preferential`, `uniform`, `holes`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parsed = match s {
            "preferential" => Self::preferential(),
            "uniform" => Self::uniform(),
            "holes" => Self::holes(),
            _ => {
                if let Some(args) = parse_call(s, "affine") {
                    let v: Vec<&str> = args.split(',').collect();
                    if v.len() != 2 {
                        return Err(ParseError("affine takes (a0, slope)".into()));
                    }
                    Self::Affine { a0: parse_f64(v[0])?, slope: parse_f64(v[1])? }
                } else if let Some(args) = parse_call(s, "power") {
                    let v: Vec<&str> = args.split(',').collect();
                    if v.len() != 2 {
                        return Err(ParseError("power takes (a0, exponent)".into()));
                    }
                    Self::PowerShifted { a0: parse_f64(v[0])?, exponent: parse_f64(v[1])? }
                } else if let Some(args) = parse_call(s, "table") {
                    let (vals, tail) = args
                        .split_once(';')
                        .ok_or_else(|| ParseError("table needs `; tail_slope`".into()))?;
                    let values = vals.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>()?;
                    Self::Table { values, tail_slope: parse_f64(tail)? }
                } else {
                    return Err(ParseError(format!("unknown attachment function {s:?}")));
                }
            }
        };
        parsed.validate()?;
        Ok(parsed)
    }
}

/// Distribution of the number of parent edges per new node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationFactor {
    pmf: Vec<(usize, f64)>,
}

impl CombinationFactor {
    pub fn constant(m: usize) -> Self {
        assert!(m >= 1, "combination factor must be at least 1");
        Self { pmf: vec![(m, 1.0)] }
    }

    /// Entries are merged by value and sorted; zero-probability entries dropped.
    pub fn from_pmf(entries: &[(usize, f64)]) -> Result<Self, ParseError> {
        let mut pmf: Vec<(usize, f64)> = Vec::new();
        for &(m, p) in entries {
            if m == 0 {
                return Err(ParseError("combination factor values must be >= 1".into()));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(ParseError(format!("bad probability {p} for m={m}")));
            }
            if p == 0.0 {
                continue;
            }
            match pmf.iter_mut().find(|(v, _)| *v == m) {
                Some(e) => e.1 += p,
                None => pmf.push((m, p)),
            }
        }
        pmf.sort_by_key(|e| e.0);
        let total: f64 = pmf.iter().map(|e| e.1).sum();
        if pmf.is_empty() || (total - 1.0).abs() > 1e-12 {
            return Err(ParseError(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { pmf })
    }

    pub fn pmf(&self) -> &[(usize, f64)] {
        &self.pmf
    }

    pub fn min_m(&self) -> usize {
        self.pmf[0].0
    }

    pub fn max_m(&self) -> usize {
        self.pmf[self.pmf.len() - 1].0
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().map(|&(m, p)| m as f64 * p).sum()
    }

    pub fn mean_reciprocal(&self) -> f64 {
        self.pmf.iter().map(|&(m, p)| p / m as f64).sum()
    }

    pub fn is_point_mass(&self) -> Option<usize> {
        (self.pmf.len() == 1).then(|| self.pmf[0].0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if let Some(m) = self.is_point_mass() {
            return m;
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(m, p) in &self.pmf {
            acc += p;
            if u < acc {
                return m;
            }
        }
        self.max_m()
    }

    /// Exact moments `(E{M}, E{1/M})` when every probability is a short rational.
    pub fn rational_moments(&self) -> Option<(BigRational, BigRational)> {
        let mut mean = BigRational::zero();
        let mut recip = BigRational::zero();
        for &(m, p) in &self.pmf {
            let p = rationalize(p)?;
            let mr = BigRational::from_integer(m.into());
            mean += &p * &mr;
            recip += p / mr;
        }
        Some((mean, recip))
    }
}

impl fmt::Display for CombinationFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.is_point_mass() {
            Some(m) => write!(f, "{m}"),
            None => {
                let parts: Vec<String> = self.pmf.iter().map(|(m, p)| format!("{m}:{p}")).collect();
                write!(f, "pmf({})", parts.join(" "))
            }
        }
    }
}

impl FromStr for CombinationFactor {
    type Err = ParseError;

    /// `const(m)`, a bare integer, or `pmf(m1: p1, m2: p2, ...)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(arg) = parse_call(s, "const") {
            let m = arg.trim().parse::<usize>().map_err(|_| ParseError(format!("bad m {arg:?}")))?;
            return Self::from_pmf(&[(m, 1.0)]);
        }
        if let Some(args) = parse_call(s, "pmf") {
            let mut entries = Vec::new();
            for part in args.split(',') {
                let (m, p) = part
                    .split_once(':')
                    .ok_or_else(|| ParseError(format!("pmf entry {part:?} needs `m: p`")))?;
                let m = m.trim().parse::<usize>().map_err(|_| ParseError(format!("bad m {m:?}")))?;
                entries.push((m, parse_f64(p)?));
            }
            return Self::from_pmf(&entries);
        }
        match s.parse::<usize>() {
            Ok(m) => Self::from_pmf(&[(m, 1.0)]),
            Err(_) => Err(ParseError(format!("unknown combination factor {s:?}"))),
        }
    }
}

/// Exact selection probabilities `a(deg_PT(u)) / Z` over PT nodes with positive weight.
pub fn parent_distribution(state: &CkpState) -> Result<Vec<(NodeId, f64)>, AttachError> {
    let weights = positive_weights(state)?;
    let z: f64 = weights.iter().map(|e| e.1).sum();
    Ok(weights.into_iter().map(|(u, w)| (u, w / z)).collect())
}

/// Like [`parent_distribution`] but in exact rationals.
pub fn parent_distribution_rational(
    state: &CkpState,
) -> Option<Result<Vec<(NodeId, BigRational)>, AttachError>> {
    let a = state.attachment();
    if state.pt_count() == 0 {
        return Some(Err(AttachError::AllPf));
    }
    let mut out = Vec::new();
    let mut z = BigRational::zero();
    for u in state.pt_nodes() {
        let w = a.eval_rational(state.pt_degree(u))?;
        if w.is_positive() {
            z += &w;
            out.push((u, w));
        }
    }
    if out.is_empty() {
        return Some(Err(AttachError::AllWeightsZero));
    }
    Some(Ok(out.into_iter().map(|(u, w)| (u, w / &z)).collect()))
}

/// Unnormalized positive weights of PT nodes, in id order.
pub fn positive_weights(state: &CkpState) -> Result<Vec<(NodeId, f64)>, AttachError> {
    if state.pt_count() == 0 {
        return Err(AttachError::AllPf);
    }
    let out: Vec<(NodeId, f64)> = state
        .pt_nodes()
        .map(|u| (u, state.attachment().eval(state.pt_degree(u))))
        .filter(|e| e.1 > 0.0)
        .collect();
    if out.is_empty() {
        return Err(AttachError::AllWeightsZero);
    }
    Ok(out)
}

/// One draw from the parent distribution using the state's weight index.
pub fn sample_parent<R: Rng + ?Sized>(state: &CkpState, rng: &mut R) -> Result<NodeId, AttachError> {
    if state.pt_count() == 0 {
        return Err(AttachError::AllPf);
    }
    let z = state.total_attachment_weight();
    if !(z > 0.0) {
        return Err(AttachError::AllWeightsZero);
    }
    let target = rng.gen::<f64>() * z;
    state.weight_index_find(target).ok_or(AttachError::AllWeightsZero)
}

/// `m` independent draws with replacement.
pub fn sample_parents<R: Rng + ?Sized>(
    state: &CkpState,
    m: usize,
    rng: &mut R,
) -> Result<Vec<NodeId>, AttachError> {
    (0..m).map(|_| sample_parent(state, rng)).collect()
}

pub fn sample_combination<R: Rng + ?Sized>(m: &CombinationFactor, rng: &mut R) -> usize {
    m.sample(rng)
}
