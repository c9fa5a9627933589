use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ckp::attachment::{AttachmentFunction, CombinationFactor};
use ckp::checking::{MarkingScope, MechanismKind};
use ckp::coupling::{marginal_audit, run_coupled, CouplingMode, CouplingOptions};
use ckp::decider::RngDecider;
use ckp::evolution::{step, AdversaryStrategy, Features, TraceLine};
use ckp::experiment::{self, parse_init, parse_k_grid, parse_p_grid, GridSpec, InitSpec};
use ckp::potentials::{exact_drift, mc_drift, theorem_verdict, Arithmetic, DriftOptions, PotentialKind};
use ckp::serial;
use ckp::state::CkpState;
use ckp::structure::Mode;

#[derive(Parser)]
#[command(name = "ckp", version, about = "Simulate cumulative knowledge processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory, dumped as JSON lines.
    Run(RunArgs),
    /// A (M, p, k) grid with CSV, JSON and SVG output.
    Grid(GridArgs),
    /// One-step drift of a potential at a state.
    Drift(DriftArgs),
    /// Coupled trajectories and the marginal audit.
    Couple(CoupleArgs),
}

/// Flags shared by the process-level subcommands.
#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "exhaustive-bfs")]
    mechanism: MechanismKind,
    #[arg(long, default_value = "preferential")]
    attach: AttachmentFunction,
    /// `const(m)`, a bare integer, or `pmf(m1: p1, ...)`.
    #[arg(long, default_value = "1")]
    m: CombinationFactor,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Error rate; a positive value or `--q` switches to general mode.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 0)]
    r: usize,
    #[arg(long = "p-e", default_value_t = 1.0)]
    p_e: f64,
    #[arg(long, default_value = "random-pt", value_parser = AdversaryStrategy::parse)]
    adversary: AdversaryStrategy,
    #[arg(long)]
    general: bool,
    #[arg(long)]
    path_only: bool,
    #[arg(long, default_value_t = 2000)]
    horizon: u64,
    /// `chain:N:W:LABEL`, with `W = m` for the largest `M` value.
    #[arg(long, default_value = "chain:25:m:CF", value_parser = parse_init)]
    init: InitSpec,
}

impl Common {
    fn features(&self) -> Features {
        let general = self.general || self.eps > 0.0 || self.q > 0.0;
        let f = if general {
            Features::general(self.attach.clone(), self.m.clone(), self.mechanism, self.p, self.k, self.eps, self.q, self.r)
        } else {
            Features::simple(self.attach.clone(), self.m.clone(), self.mechanism, self.p, self.k)
        };
        let scope = if self.path_only { MarkingScope::PathOnly } else { MarkingScope::Descendants };
        Features { scope, ..f.with_noisy_detection(self.p_e) }
    }

    fn initial_state(&self) -> CkpState {
        self.init.build(&self.attach, &self.m)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GridArgs {
    /// Flat `key = value` configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "grid-out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    mechanism: Option<MechanismKind>,
    #[arg(long)]
    attach: Option<AttachmentFunction>,
    /// Comma list of integers, e.g. `1,2,5`.
    #[arg(long)]
    m: Option<String>,
    /// Comma list or `start:end:step`.
    #[arg(long)]
    p: Option<String>,
    /// Comma list or `lo..hi`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_parser = parse_init)]
    init: Option<InitSpec>,
    #[arg(long)]
    general: bool,
    /// Run the invariant monitor with this full-check period.
    #[arg(long)]
    monitor_every: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PotentialArg {
    MinDistance,
    MinimalFalse,
    LeavesSimple,
    LeavesGeneral,
}

#[derive(Args)]
struct DriftArgs {
    #[command(flatten)]
    common: Common,
    /// State in the text format; defaults to the `--init` chain.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "min-distance")]
    potential: PotentialArg,
    #[arg(long, default_value_t = 3.0)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    anchor: usize,
    /// Also estimate the drift from this many sampled steps.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    float: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum VaryArg {
    P,
    K,
}

#[derive(Args)]
struct CoupleArgs {
    #[arg(long, value_enum, default_value = "p")]
    mode: VaryArg,
    #[arg(long, default_value_t = 0.9)]
    p1: f64,
    #[arg(long, default_value_t = 0.95)]
    p2: f64,
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    k1: usize,
    #[arg(long, default_value_t = 6)]
    k2: usize,
    /// The coupling is defined for `m = 1` only.
    #[arg(long, default_value = "1")]
    m: CombinationFactor,
    #[arg(long)]
    general: bool,
    #[arg(long, default_value = "preferential")]
    attach: AttachmentFunction,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 500)]
    horizon: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compare projections with directly simulated processes.
    #[arg(long)]
    audit: bool,
    #[arg(long)]
    literal_stop_set: bool,
    #[arg(long)]
    literal_znct_to_pf: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

type Res = Result<(), Box<dyn std::error::Error>>;

fn output(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_run(a: RunArgs) -> Res {
    let c = a.common;
    let f = c.features();
    f.validate()?;
    let mut state = c.initial_state();
    let mut adversary = c.adversary.clone();
    let seed = c.seed.unwrap_or(0);
    let mut d = RngDecider::new(ChaCha8Rng::seed_from_u64(seed));
    let mut out = output(c.out.as_ref())?;
    for t in 1..=c.horizon {
        let record = step(&mut state, &f, &mut adversary, &mut d);
        serde_json::to_writer(&mut out, &TraceLine::of(&state, &record, t))?;
        writeln!(out)?;
        if f.mode == Mode::Simple && state.pt_count() == 0 {
            break;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Res {
    let mut spec = match &a.config {
        Some(path) => experiment::load_config(path)?,
        None => {
            let mut s = if a.general { GridSpec::general() } else { GridSpec::default() };
            experiment::seed_override(&mut s, std::env::var(experiment::SEED_ENV).ok().as_deref())?;
            s
        }
    };
    if a.general {
        spec.mode = Mode::General;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.workers {
        spec.workers = v;
    }
    if let Some(v) = a.mechanism {
        spec.mechanism = v;
    }
    if let Some(v) = a.attach {
        spec.attach = v;
    }
    if let Some(v) = &a.m {
        spec.m_values = v.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?;
    }
    if let Some(v) = &a.p {
        spec.p_grid = parse_p_grid(v)?;
    }
    if let Some(v) = &a.k {
        spec.k_grid = parse_k_grid(v)?;
    }
    if let Some(v) = a.eps {
        spec.epsilon = v;
    }
    if let Some(v) = a.q {
        spec.q = v;
    }
    if let Some(v) = a.r {
        spec.r = v;
    }
    if let Some(v) = a.horizon {
        spec.horizon = v;
    }
    if let Some(v) = a.trials {
        spec.trials = v;
    }
    if let Some(v) = a.init {
        spec.init = v;
    }
    if a.monitor_every.is_some() {
        spec.monitor_every = a.monitor_every;
    }
    let cells = experiment::run_grid(&spec)?;
    for path in experiment::write_artifacts(&a.out, &cells)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_drift(a: DriftArgs) -> Res {
    let c = &a.common;
    let f = c.features();
    f.validate()?;
    let state = match &a.state {
        Some(path) => serial::from_text(&fs::read_to_string(path)?, c.attach.clone())?,
        None => c.initial_state(),
    };
    let kind = match a.potential {
        PotentialArg::MinDistance => PotentialKind::MinDistance { c: a.c },
        PotentialArg::MinimalFalse => PotentialKind::MinimalFalse,
        PotentialArg::LeavesSimple => PotentialKind::MinimalFalseLeavesSimple,
        PotentialArg::LeavesGeneral => PotentialKind::MinimalFalseLeavesGeneral { anchor: a.anchor },
    };
    let options = DriftOptions {
        arithmetic: if a.float { Arithmetic::Float } else { Arithmetic::Auto },
        adversary: c.adversary.clone(),
        ..DriftOptions::default()
    };
    let report = exact_drift(&state, &f, &kind, &options)?;
    let verdict = theorem_verdict(&f).map(|v| v.name().to_string()).unwrap_or_else(|e| e.to_string());
    let mc = match a.mc {
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed.unwrap_or(0));
            Some(mc_drift(&state, &f, &kind, &c.adversary, n, &mut rng)?)
        }
        None => None,
    };
    let mut out = output(c.out.as_ref())?;
    serde_json::to_writer_pretty(&mut out, &serde_json::json!({ "drift": report, "verdict": verdict, "mc": mc }))?;
    writeln!(out)?;
    Ok(())
}

fn cmd_couple(a: CoupleArgs) -> Res {
    if a.general || a.m.is_point_mass() != Some(1) {
        return Err(ckp::coupling::CouplingError::OutOfScope.into());
    }
    let mode = match a.mode {
        VaryArg::P => CouplingMode::VaryP { p1: a.p1, p2: a.p2, k: a.k },
        VaryArg::K => CouplingMode::VaryK { p: a.p, k1: a.k1, k2: a.k2 },
    };
    mode.validate()?;
    let options = CouplingOptions { literal_stop_set: a.literal_stop_set, literal_znct_to_pf: a.literal_znct_to_pf };
    let mut traces = Vec::with_capacity(a.trials);
    for i in 0..a.trials as u64 {
        traces.push(run_coupled(&a.attach, mode, options, a.horizon, ckp::evolution::derive_seed(a.seed, &[i]))?);
    }
    let eliminated = traces.iter().filter(|t| t.witness.is_some()).count();
    let witnessed = traces.iter().filter(|t| t.witness == Some(true)).count();
    let violations: u64 = traces.iter().map(|t| t.violations()).sum();
    let audit = if a.audit { Some(marginal_audit(&a.attach, mode, options, a.trials, a.horizon, a.seed)?) } else { None };
    let mut out = output(a.out.as_ref())?;
    serde_json::to_writer_pretty(
        &mut out,
        &serde_json::json!({
            "mode": mode,
            "trajectories": a.trials,
            "x_eliminated": eliminated,
            "witness_holds": witnessed,
            "violations": violations,
            "audit": audit,
        }),
    )?;
    writeln!(out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Drift(a) => cmd_drift(a),
        Command::Couple(a) => cmd_couple(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
