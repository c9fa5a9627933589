//! Run the structural invariant monitor on one long trajectory per mechanism.
//!
//! With M = 2, Stringy and Complete can drop the leaves potential below the
//! single-find floor; the report shows the extremes either way.

use ckp::evolution::{init_chain, Cadence, RunConfig};
use ckp::invariants::run_monitored;
use ckp::{AdversaryStrategy, AttachmentFunction, CombinationFactor, Features, Label, MechanismKind};

fn main() {
    let attach = AttachmentFunction::preferential();
    let init = init_chain(attach.clone(), 25, 2, Label::Cf);
    let cfg = RunConfig { horizon: 2000, cadence: Cadence::None };
    for kind in MechanismKind::ALL {
        let f = Features::simple(attach.clone(), CombinationFactor::constant(2), kind, 0.1, 6);
        let (result, report) = run_monitored(&f, &init, &cfg, &AdversaryStrategy::RandomPt, 5, 50);
        println!(
            "{:<15} survived {:<5} leaves-potential step range [{}, {}], violations {:?}",
            kind.name(),
            result.survived_at_horizon,
            report.min_leaves_increment,
            report.max_leaves_increment,
            report.violations
        );
        for v in report.examples.iter().take(2) {
            println!("    step {}: {}", v.step, v.detail);
        }
    }
}
