//! Exact one-step drift next to its Monte Carlo estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ckp::evolution::{init_chain, sample_reachable_states};
use ckp::potentials::{exact_drift, mc_drift, DriftOptions, PotentialKind};
use ckp::{AdversaryStrategy, AttachmentFunction, CkpState, CombinationFactor, Features, Label, MechanismKind};

fn main() {
    let attach = AttachmentFunction::preferential();
    let dist = PotentialKind::MinDistance { c: 3.0 };

    // Single CF under BFS: 4 - 5p, negative once p > 4/5.
    println!("single CF, bfs, c = 3");
    for p in [0.5, 0.8, 0.9] {
        let f = Features::simple(attach.clone(), CombinationFactor::constant(1), MechanismKind::Bfs, p, 2);
        let r = exact_drift(&CkpState::with_root(attach.clone(), Label::Cf), &f, &dist, &DriftOptions::default()).unwrap();
        println!("  p = {p}: {} ({:?})", r.exact.unwrap(), r.sign);
    }

    let f = Features::simple(attach.clone(), CombinationFactor::constant(2), MechanismKind::ExhaustiveBfs, 0.6, 3);
    println!("\nsampled states, exhaustive-bfs, m = 2, p = 0.6");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in sample_reachable_states(&f, &init_chain(attach.clone(), 1, 1, Label::Cf), 6, 7, 11) {
        let ex = exact_drift(&s, &f, &dist, &DriftOptions::default()).unwrap();
        let mc = mc_drift(&s, &f, &dist, &AdversaryStrategy::RandomPt, 20_000, &mut rng).unwrap();
        println!(
            "  {:>2} nodes, phi {:>7.2}: exact {:>9.4} over {:>5} outcomes, mc {:>9.4} +- {:.4}",
            s.len(),
            ex.potential_before,
            ex.drift,
            ex.leaves,
            mc.mean,
            mc.se
        );
    }
}
