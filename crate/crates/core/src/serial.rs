//! Line-oriented text format for states.
//!
//! ```text
//! ckp-state v1 3
//! 0 CF 1 0 0 -
//! 1 CT 1 1 0 0
//! 2 CT 1 2 0 1,1
//! ```
//!
//! Columns: id, label, is_false, birth_time, adversarial, parents (comma
//! separated with repeats, `-` when empty). The attachment function is not part
//! of the node format and is supplied when parsing.

use std::fmt::Write as _;

use crate::attachment::AttachmentFunction;
use crate::state::{CkpState, NodeRecord, StateError};

const HEADER: &str = "ckp-state v1";

pub fn to_text(state: &CkpState) -> String {
    let mut out = String::with_capacity(16 * state.len() + 32);
    let _ = writeln!(out, "{HEADER} {}", state.len());
    for n in state.nodes() {
        let parents = if n.parents.is_empty() {
            "-".to_string()
        } else {
            n.parents.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            n.id, n.label, n.is_false as u8, n.birth_time, n.adversarial as u8, parents
        );
    }
    out
}

fn flag(s: &str, line: usize) -> Result<bool, StateError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(StateError::Parse(format!("line {line}: expected 0 or 1, got {s:?}"))),
    }
}

/// Parses [`to_text`] output. The state's step is set to the largest birth time.
pub fn from_text(text: &str, attach: AttachmentFunction) -> Result<CkpState, StateError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| StateError::Parse("empty input".into()))?;
    let count = header
        .strip_prefix(HEADER)
        .and_then(|rest| rest.trim().parse::<usize>().ok())
        .ok_or_else(|| StateError::Parse(format!("bad header {header:?}")))?;
    let mut records = Vec::with_capacity(count);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(StateError::Parse(format!("line {lineno}: expected 6 columns, got {}", cols.len())));
        }
        let num = |s: &str| {
            s.parse::<u64>().map_err(|_| StateError::Parse(format!("line {lineno}: bad number {s:?}")))
        };
        let parents = if cols[5] == "-" {
            Vec::new()
        } else {
            cols[5].split(',').map(|p| num(p).map(|x| x as usize)).collect::<Result<Vec<_>, _>>()?
        };
        records.push(NodeRecord {
            id: num(cols[0])? as usize,
            label: cols[1].parse()?,
            is_false: flag(cols[2], lineno)?,
            birth_time: num(cols[3])?,
            adversarial: flag(cols[4], lineno)?,
            parents,
            children: Vec::new(),
        });
    }
    if records.len() != count {
        return Err(StateError::Parse(format!("header promises {count} nodes, found {}", records.len())));
    }
    let step = records.iter().map(|r| r.birth_time).max().unwrap_or(0);
    CkpState::from_records(attach, records, step)
}
