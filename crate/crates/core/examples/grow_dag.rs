//! Grow a simple process from a ten-node chain under a CF root and print
//! what happened.
//!
//! `cargo run --example grow_dag -- [p] [k] [seed]`

use ckp::evolution::{init_chain, run_to_state, Cadence, RunConfig};
use ckp::{AdversaryStrategy, AttachmentFunction, CkpState, CombinationFactor, Features, Label, MechanismKind};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let p: f64 = args.first().map_or(0.3, |s| s.parse().expect("p"));
    let k: usize = args.get(1).map_or(3, |s| s.parse().expect("k"));
    let seed: u64 = args.get(2).map_or(7, |s| s.parse().expect("seed"));

    let attach = AttachmentFunction::preferential();
    let f = Features::simple(attach.clone(), CombinationFactor::constant(1), MechanismKind::Bfs, p, k);
    let init = init_chain(attach, 10, 1, Label::Cf);
    let cfg = RunConfig { horizon: 500, cadence: Cadence::Every(100) };

    let mut checks = 0;
    let mut obs = |_: &CkpState, r: &ckp::evolution::StepRecord, t: u64| {
        if !r.marked().is_empty() {
            checks += 1;
            if checks <= 5 {
                println!("step {t:>3}: marked {:?}", r.marked());
            }
        }
    };
    let (result, state) = run_to_state(&f, &init, &cfg, &AdversaryStrategy::RandomPt, seed, &mut obs);

    println!("\n{:>5} {:>6} {:>5} {:>8} {:>5}", "step", "nodes", "pt", "pt_false", "pf");
    for c in &result.checkpoints {
        println!("{:>5} {:>6} {:>5} {:>8} {:>5}", c.step, c.nodes, c.pt, c.pt_false, c.pf);
    }
    match result.eliminated_at {
        Some(t) => println!("\neliminated at step {t} after {checks} successful checks"),
        None => println!("\nstill alive: {} PT False nodes of {}", state.pt_false_count(), state.len()),
    }
}
