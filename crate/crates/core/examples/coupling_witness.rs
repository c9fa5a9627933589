//! Couple a weaker and a stronger checker and watch the zombie labels.

use ckp::coupling::{marginal_audit, run_coupled, CouplingMode, CouplingOptions};
use ckp::AttachmentFunction;

fn main() {
    let attach = AttachmentFunction::preferential();
    let mode = CouplingMode::VaryP { p1: 0.3, p2: 0.7, k: 3 };
    let opts = CouplingOptions::default();

    let mut eliminated = 0;
    let mut zombies = 0;
    for seed in 0..200 {
        let t = run_coupled(&attach, mode, opts, 500, seed).unwrap();
        assert_eq!(t.violations(), 0, "seed {seed}");
        zombies += t.zombies_created;
        if let Some(at) = t.x_eliminated_at {
            eliminated += 1;
            // Whenever the weaker checker clears the errors, so has the stronger one.
            assert_eq!(t.witness, Some(true));
            if eliminated <= 3 {
                println!("seed {seed}: X clean at step {at}, Y-time {:?}", t.y_time_at_x_elimination);
            }
        }
    }
    println!("{eliminated}/200 weaker-checker runs eliminated; {zombies} zombie labels created; witness held every time");

    let audit = marginal_audit(&attach, mode, opts, 300, 500, 1).unwrap();
    println!("\nmarginal audit, 300 trials:");
    for c in audit.x.iter().chain(&audit.y) {
        println!("  {:<28} coupled {:>8.3} direct {:>8.3} |diff| {:.3}", c.statistic, c.coupled_mean, c.direct_mean, c.abs_diff);
    }
}
