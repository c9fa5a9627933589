//! Grid sweeps over `(M, p, k)`: configuration, parallel execution and the
//! per-cell statistics behind the survival heatmaps.

mod config;
mod emit;

pub use config::{parse_config, parse_p_grid, parse_k_grid, parse_init, seed_override, load_config, SEED_ENV};
pub use emit::{cells_json, emit_csv, emit_line_chart, emit_metrics_csv, emit_svg, write_artifacts, CSV_HEADER};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attachment::{AttachmentFunction, CombinationFactor};
use crate::checking::{MarkingScope, MechanismKind};
use crate::evolution::{derive_seed, init_chain, run, AdversaryStrategy, Cadence, Features, RunConfig};
use crate::invariants::{run_monitored, InvariantReport};
use crate::potentials::{theorem_verdict, TheoremVerdict};
use crate::state::{CkpState, Label};
use crate::structure::Mode;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("line {line}: `{field}`: {message}")]
    Line { line: usize, field: String, message: String },
    #[error("`{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GridError {
    pub(crate) fn field(field: &str, message: impl Into<String>) -> Self {
        Self::Field { field: field.into(), message: message.into() }
    }
}

/// Initial state: a chain of `n` nodes, the first labeled `first_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub n: usize,
    /// Parallel edges per chain link; `None` uses the cell's largest `M` value.
    pub width: Option<usize>,
    pub first_label: Label,
}

impl InitSpec {
    pub fn build(&self, attach: &AttachmentFunction, m: &CombinationFactor) -> CkpState {
        init_chain(attach.clone(), self.n, self.width.unwrap_or_else(|| m.max_m()), self.first_label)
    }
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { n: 25, width: None, first_label: Label::Cf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mode: Mode,
    pub mechanism: MechanismKind,
    pub p_e: f64,
    pub scope: MarkingScope,
    pub attach: AttachmentFunction,
    pub m_values: Vec<CombinationFactor>,
    pub p_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub epsilon: f64,
    pub q: f64,
    pub r: usize,
    pub adversary: AdversaryStrategy,
    pub init: InitSpec,
    pub horizon: u64,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    /// Run every trial under the invariant monitor with this full-check period.
    pub monitor_every: Option<u64>,
}

/// Default error rate for general-mode grids.
pub const GENERAL_EPSILON: f64 = 0.25;

pub fn default_p_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl Default for GridSpec {
    /// Chain of 25 from a CF node, 2000 steps, 20 trials per cell,
    /// `p` in steps of 0.1, `k` from 1 to 10, `m` in {1, 2, 5}.
    fn default() -> Self {
        Self {
            mode: Mode::Simple,
            mechanism: MechanismKind::ExhaustiveBfs,
            p_e: 1.0,
            scope: MarkingScope::Descendants,
            attach: AttachmentFunction::preferential(),
            m_values: [1, 2, 5].into_iter().map(CombinationFactor::constant).collect(),
            p_grid: default_p_grid(),
            k_grid: (1..=10).collect(),
            epsilon: 0.0,
            q: 0.0,
            r: 0,
            adversary: AdversaryStrategy::RandomPt,
            init: InitSpec::default(),
            horizon: 2000,
            trials: 20,
            seed: 0,
            workers: 0,
            monitor_every: None,
        }
    }
}

impl GridSpec {
    /// The default grid in general mode with error rate 0.25.
    pub fn general() -> Self {
        Self { mode: Mode::General, epsilon: GENERAL_EPSILON, ..Self::default() }
    }

    pub fn features(&self, m: &CombinationFactor, p: f64, k: usize) -> Features {
        let f = match self.mode {
            Mode::Simple => Features::simple(self.attach.clone(), m.clone(), self.mechanism, p, k),
            Mode::General => {
                Features::general(self.attach.clone(), m.clone(), self.mechanism, p, k, self.epsilon, self.q, self.r)
            }
        };
        Features { scope: self.scope, ..f.with_noisy_detection(self.p_e) }
    }

    pub fn cell_count(&self) -> usize {
        self.m_values.len() * self.p_grid.len() * self.k_grid.len()
    }

    /// Cells in output order: by `M`, then `k`, then `p`.
    fn cell_keys(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.cell_count());
        for mi in 0..self.m_values.len() {
            for ki in 0..self.k_grid.len() {
                for pi in 0..self.p_grid.len() {
                    out.push((mi, pi, ki));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.trials == 0 {
            return Err(GridError::field("trials", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(GridError::field("horizon", "must be at least 1"));
        }
        if self.m_values.is_empty() {
            return Err(GridError::field("M", "needs at least one value"));
        }
        if self.p_grid.is_empty() {
            return Err(GridError::field("p", "needs at least one value"));
        }
        if self.k_grid.is_empty() {
            return Err(GridError::field("k", "needs at least one value"));
        }
        if self.init.n == 0 || self.init.width == Some(0) {
            return Err(GridError::field("init", "chain length and width must be at least 1"));
        }
        if self.mode == Mode::Simple && (self.epsilon != 0.0 || self.q != 0.0) {
            return Err(GridError::field("mode", "simple mode requires epsilon = 0 and q = 0"));
        }
        if self.monitor_every == Some(0) {
            return Err(GridError::field("monitor_every", "must be at least 1"));
        }
        for m in &self.m_values {
            for &p in &self.p_grid {
                for &k in &self.k_grid {
                    self.features(m, p, k).validate().map_err(|e| GridError::field("features", e.0))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    /// `M` as written in outputs: the integer for a point mass.
    pub m: String,
    pub mean_m: f64,
    pub p: f64,
    pub k: usize,
    pub trials: usize,
    pub survived: usize,
    pub survival_rate: f64,
    /// Mean start of the final PT-False-free stretch, over eliminated trials.
    pub mean_elim_time: Option<f64>,
    pub pf_exists: usize,
    pub pf_exists_rate: f64,
    pub verdict: TheoremVerdict,
    /// Set when no verdict could be derived (irregular attachment).
    pub verdict_note: Option<String>,
    pub invariants: Option<InvariantReport>,
}

struct TrialOutcome {
    survived: bool,
    pf_exists: bool,
    eliminated_at: Option<u64>,
    report: Option<InvariantReport>,
}

/// Runs every `(M, p, k)` cell for `spec.trials` trials. Trial `i` of a cell
/// uses a seed derived from the base seed and the cell coordinates, so the
/// output does not depend on scheduling or worker count.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<HeatmapCell>, GridError> {
    spec.validate()?;
    let keys = spec.cell_keys();
    let tasks: Vec<(usize, usize)> = (0..keys.len()).flat_map(|c| (0..spec.trials).map(move |t| (c, t))).collect();
    let inits: Vec<CkpState> = spec.m_values.iter().map(|m| spec.init.build(&spec.attach, m)).collect();
    let config = RunConfig { horizon: spec.horizon, cadence: Cadence::None };

    let run_task = |&(c, t): &(usize, usize)| {
        let (mi, pi, ki) = keys[c];
        let f = spec.features(&spec.m_values[mi], spec.p_grid[pi], spec.k_grid[ki]);
        let seed = derive_seed(spec.seed, &[mi as u64, spec.p_grid[pi].to_bits(), spec.k_grid[ki] as u64, t as u64]);
        let (res, report) = match spec.monitor_every {
            Some(every) => {
                let (res, rep) = run_monitored(&f, &inits[mi], &config, &spec.adversary, seed, every);
                (res, Some(rep))
            }
            None => (run(&f, &inits[mi], &config, &spec.adversary, seed), None),
        };
        TrialOutcome {
            survived: res.survived_at_horizon,
            pf_exists: res.pf_exists_at_horizon,
            eliminated_at: res.eliminated_at,
            report,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| GridError::field("workers", e.to_string()))?;
    let outcomes: Vec<TrialOutcome> = pool.install(|| tasks.par_iter().map(run_task).collect());

    let mut cells = Vec::with_capacity(keys.len());
    for (c, chunk) in outcomes.chunks(spec.trials).enumerate() {
        let (mi, pi, ki) = keys[c];
        let m = &spec.m_values[mi];
        let (p, k) = (spec.p_grid[pi], spec.k_grid[ki]);
        let survived = chunk.iter().filter(|o| o.survived).count();
        let pf_exists = chunk.iter().filter(|o| o.pf_exists).count();
        let elim: Vec<f64> = chunk.iter().filter(|o| !o.survived).filter_map(|o| o.eliminated_at).map(|t| t as f64).collect();
        let mean_elim_time = (!elim.is_empty()).then(|| elim.iter().sum::<f64>() / elim.len() as f64);
        let (verdict, verdict_note) = match theorem_verdict(&spec.features(m, p, k)) {
            Ok(v) => (v, None),
            Err(e) => (TheoremVerdict::Unknown, Some(e.to_string())),
        };
        let invariants = spec.monitor_every.map(|_| {
            let mut total = InvariantReport::default();
            for o in chunk {
                if let Some(r) = &o.report {
                    total.merge(r);
                }
            }
            total
        });
        cells.push(HeatmapCell {
            m: m.to_string(),
            mean_m: m.mean(),
            p,
            k,
            trials: spec.trials,
            survived,
            survival_rate: survived as f64 / spec.trials as f64,
            mean_elim_time,
            pf_exists,
            pf_exists_rate: pf_exists as f64 / spec.trials as f64,
            verdict,
            verdict_note,
            invariants,
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridSpec {
        GridSpec {
            m_values: vec![CombinationFactor::constant(1)],
            p_grid: vec![0.0, 0.9],
            k_grid: vec![5],
            horizon: 300,
            trials: 6,
            seed: 11,
            ..GridSpec::default()
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let spec = GridSpec { trials: 0, ..small() };
        assert!(matches!(run_grid(&spec), Err(GridError::Field { ref field, .. }) if field == "trials"));
    }

    #[test]
    fn no_checks_means_survival() {
        let cells = run_grid(&small()).unwrap();
        assert_eq!(cells.len(), 2);
        let c = &cells[0];
        assert_eq!((c.p, c.k, c.survived, c.survival_rate), (0.0, 5, 6, 1.0));
        assert_eq!(c.mean_elim_time, None);
        assert!(c.verdict.is_survival());
    }

    #[test]
    fn independent_of_worker_count() {
        let a = run_grid(&GridSpec { workers: 1, ..small() }).unwrap();
        let b = run_grid(&GridSpec { workers: 3, ..small() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn survival_rate_is_exact_ratio() {
        for c in run_grid(&small()).unwrap() {
            assert_eq!(c.survival_rate, c.survived as f64 / c.trials as f64);
        }
    }

    #[test]
    fn simple_mode_rejects_epsilon() {
        let spec = GridSpec { epsilon: 0.2, ..small() };
        assert!(spec.validate().is_err());
        GridSpec { m_values: vec![CombinationFactor::constant(1)], ..GridSpec::general() }.validate().unwrap();
    }

    #[test]
    fn monitored_grid_is_clean() {
        let spec = GridSpec { monitor_every: Some(25), ..small() };
        for c in run_grid(&spec).unwrap() {
            assert_eq!(c.invariants.unwrap().total_violations(), 0);
        }
    }
}
