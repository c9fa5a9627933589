//! One hand-built DAG, every mechanism, all check coins forced to succeed.
//!
//! The DAG: a CF node 0 with a CT chain 0 -> 1 -> 2, a second CT branch
//! 0 -> 3, and a new node 4 with parents 2 and 3.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ckp::checking::{run_check, CheckParams, MarkingScope};
use ckp::decider::{ForcedCoins, RngDecider};
use ckp::{AttachmentFunction, CkpState, Label, MechanismKind};

fn main() {
    let mut s = CkpState::with_root(AttachmentFunction::preferential(), Label::Cf);
    s.add_node(&[0], Label::Ct, false).unwrap();
    s.add_node(&[1], Label::Ct, false).unwrap();
    s.add_node(&[0], Label::Ct, false).unwrap();
    let v = s.add_node(&[2, 3], Label::Ct, false).unwrap();

    for k in [1, 2, 3] {
        println!("k = {k}");
        for kind in MechanismKind::ALL {
            for scope in [MarkingScope::Descendants, MarkingScope::PathOnly] {
                if scope == MarkingScope::PathOnly && kind == MechanismKind::Stringy {
                    continue;
                }
                let params = CheckParams { k, p: 1.0, p_e: 1.0, scope };
                let mut d = ForcedCoins { inner: RngDecider::new(ChaCha8Rng::seed_from_u64(1)), outcome: true };
                let out = run_check(&s, v, kind, &params, &mut d);
                println!(
                    "  {:<15} {:<11} found {:<8} marked {:<16} visited {:?}",
                    kind.name(),
                    format!("{scope:?}"),
                    format!("{:?}", out.found),
                    format!("{:?}", out.marked),
                    out.visited
                );
            }
        }
    }
}
