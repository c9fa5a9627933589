//! Flat `key = value` grid configuration.
//!
//! ```text
//! # comments start with '#'
//! mode = simple
//! mechanism = exhaustive-bfs
//! attach = affine(1, 1)
//! M = const(1); const(2); pmf(1: 0.5, 2: 0.5)
//! p = 0:1:0.1
//! k = 1..10
//! init = chain:25:m:CF
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use super::{GridError, GridSpec, InitSpec, GENERAL_EPSILON};
use crate::attachment::CombinationFactor;
use crate::checking::MarkingScope;
use crate::evolution::AdversaryStrategy;
use crate::state::Label;
use crate::structure::Mode;

/// Environment variable overriding the base seed.
pub const SEED_ENV: &str = "CKP_SEED";

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.trim().parse::<T>().map_err(|_| format!("{:?} is not a valid {what}", s.trim()))
}

/// A comma list, or `start:end:step` (inclusive end).
pub fn parse_p_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (a, b, h): (f64, f64, f64) = (num(parts[0], "number")?, num(parts[1], "number")?, num(parts[2], "number")?);
        if !(h > 0.0) || b < a {
            return Err("a range needs start <= end and a positive step".into());
        }
        // Counted steps avoid accumulating rounding error.
        let n = ((b - a) / h + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| a + i as f64 * h).map(|x| (x * 1e12).round() / 1e12).collect());
    }
    s.split(',').map(|x| num(x, "number")).collect()
}

/// A comma list, or `lo..hi` (inclusive).
pub fn parse_k_grid(s: &str) -> Result<Vec<usize>, String> {
    if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi): (usize, usize) = (num(lo, "integer")?, num(hi.trim_start_matches('='), "integer")?);
        if lo > hi {
            return Err("empty k range".into());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|x| num(x, "integer")).collect()
}

/// `chain:N:W:LABEL`, where `W` is a width or `m` for the cell's `M`.
pub fn parse_init(s: &str) -> Result<InitSpec, String> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    match parts.as_slice() {
        ["chain", n, w, label] => {
            let n = num(n, "chain length")?;
            let width = if w.trim() == "m" { None } else { Some(num(w, "chain width")?) };
            let first_label = label.trim().parse::<Label>().map_err(|e| e.to_string())?;
            Ok(InitSpec { n, width, first_label })
        }
        _ => Err(format!("expected chain:N:W:LABEL, got {s:?}")),
    }
}

fn parse_m_values(s: &str) -> Result<Vec<CombinationFactor>, String> {
    s.split(';').map(|x| x.trim().parse::<CombinationFactor>().map_err(|e| e.0)).collect()
}

/// Parses a configuration over the defaults. In general mode `epsilon`
/// defaults to 0.25 unless given.
pub fn parse_config(text: &str) -> Result<GridSpec, GridError> {
    let mut spec = GridSpec::default();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |field: &str, message: String| GridError::Line { line, field: field.into(), message };
        let Some((key, value)) = content.split_once('=') else {
            return Err(err(content, "expected `key = value`".into()));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(err(key, "given twice".into()));
        }
        let set = |spec: &mut GridSpec| -> Result<(), String> {
            match key {
                "mode" => {
                    spec.mode = match value {
                        "simple" => Mode::Simple,
                        "general" => Mode::General,
                        _ => return Err(format!("expected simple or general, got {value:?}")),
                    }
                }
                "mechanism" => spec.mechanism = value.parse().map_err(|e: String| e)?,
                "p_e" => spec.p_e = num(value, "probability")?,
                "scope" => {
                    spec.scope = match value {
                        "descendants" => MarkingScope::Descendants,
                        "path-only" => MarkingScope::PathOnly,
                        _ => return Err(format!("expected descendants or path-only, got {value:?}")),
                    }
                }
                "attach" => spec.attach = value.parse().map_err(|e: crate::attachment::ParseError| e.0)?,
                "M" => spec.m_values = parse_m_values(value)?,
                "m" => {
                    spec.m_values =
                        value.split(',').map(|x| num(x, "integer").map(CombinationFactor::constant)).collect::<Result<_, _>>()?
                }
                "p" => spec.p_grid = parse_p_grid(value)?,
                "k" => spec.k_grid = parse_k_grid(value)?,
                "epsilon" => spec.epsilon = num(value, "probability")?,
                "q" => spec.q = num(value, "probability")?,
                "r" => spec.r = num(value, "integer")?,
                "adversary" => spec.adversary = AdversaryStrategy::parse(value)?,
                "init" => spec.init = parse_init(value)?,
                "horizon" => spec.horizon = num(value, "integer")?,
                "trials" => spec.trials = num(value, "integer")?,
                "seed" => spec.seed = num(value, "integer")?,
                "workers" => spec.workers = num(value, "integer")?,
                "monitor_every" => spec.monitor_every = Some(num(value, "integer")?),
                _ => return Err("unknown key".into()),
            }
            Ok(())
        };
        set(&mut spec).map_err(|m| err(key, m))?;
    }
    if spec.mode == Mode::General && !seen.contains("epsilon") {
        spec.epsilon = GENERAL_EPSILON;
    }
    spec.validate()?;
    Ok(spec)
}

/// Applies a `CKP_SEED` value, if any.
pub fn seed_override(spec: &mut GridSpec, value: Option<&str>) -> Result<(), GridError> {
    if let Some(v) = value {
        spec.seed = v.trim().parse().map_err(|_| GridError::field(SEED_ENV, format!("{v:?} is not an integer")))?;
    }
    Ok(())
}

/// Reads a configuration file and applies the `CKP_SEED` override.
pub fn load_config(path: &Path) -> Result<GridSpec, GridError> {
    let text = std::fs::read_to_string(path)?;
    let mut spec = parse_config(&text)?;
    seed_override(&mut spec, std::env::var(SEED_ENV).ok().as_deref())?;
    Ok(spec)
}
