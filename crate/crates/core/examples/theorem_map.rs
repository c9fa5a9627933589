//! Text map of the proven regions over (p, k) for a few mechanisms.
//!
//! `E` proven elimination, `S` proven survival, `.` no verdict.

use ckp::potentials::theorem_verdict;
use ckp::{AttachmentFunction, CombinationFactor, Features, MechanismKind};

fn main() {
    let attach = AttachmentFunction::preferential();
    for (kind, m) in [(MechanismKind::Stringy, 1), (MechanismKind::ExhaustiveBfs, 1), (MechanismKind::ExhaustiveBfs, 3)] {
        println!("{} with M = {m}", kind.name());
        print!("  k\\p ");
        for i in 0..=20 {
            print!("{}", if i % 5 == 0 { '|' } else { ' ' });
        }
        println!();
        for k in 1..=10 {
            print!("  {k:>3} ");
            for i in 0..=20 {
                let f = Features::simple(attach.clone(), CombinationFactor::constant(m), kind, i as f64 / 20.0, k);
                let c = match theorem_verdict(&f) {
                    Ok(v) if v.is_elimination() => 'E',
                    Ok(v) if v.is_survival() => 'S',
                    _ => '.',
                };
                print!("{c}");
            }
            println!();
        }
        println!();
    }

    let general = Features::general(attach, CombinationFactor::constant(1), MechanismKind::ExhaustiveBfs, 0.95, 6, 0.25, 0.0, 0);
    println!("general, eps 0.25, p 0.95, k 6: {:?}", theorem_verdict(&general));
}
