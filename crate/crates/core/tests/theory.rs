//! Verdict consistency and monotonicity, and clean coupled trajectories.

use proptest::prelude::*;

use ckp::attachment::{AttachmentFunction, CombinationFactor};
use ckp::checking::MechanismKind;
use ckp::coupling::{run_coupled, CouplingMode, CouplingOptions};
use ckp::evolution::Features;
use ckp::potentials::{all_verdicts, theorem_verdict};

fn attach_strategy() -> impl Strategy<Value = AttachmentFunction> {
    prop_oneof![
        (1u32..4, 0u32..4).prop_map(|(a0, b)| AttachmentFunction::Affine { a0: a0 as f64, slope: b as f64 }),
        (1u32..3, 1u32..8).prop_map(|(a0, e)| AttachmentFunction::PowerShifted { a0: a0 as f64, exponent: e as f64 / 2.0 }),
    ]
}

fn m_strategy() -> impl Strategy<Value = CombinationFactor> {
    prop_oneof![
        (1usize..=4).prop_map(CombinationFactor::constant),
        Just(CombinationFactor::from_pmf(&[(1, 0.5), (3, 0.5)]).unwrap()),
    ]
}

fn features(a: AttachmentFunction, m: CombinationFactor, kind: MechanismKind, p: f64, k: usize, eps: f64, q: f64) -> Features {
    if eps == 0.0 && q == 0.0 {
        Features::simple(a, m, kind, p, k)
    } else {
        Features::general(a, m, kind, p, k, eps, q, 2)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn verdicts_never_conflict(
        a in attach_strategy(), m in m_strategy(), kind in prop::sample::select(MechanismKind::ALL.to_vec()),
        p in 0.0f64..=1.0, k in 1usize..12, eps in prop::sample::select(vec![0.0, 0.05, 0.25, 0.5]), q in prop::sample::select(vec![0.0, 0.1, 0.3]),
    ) {
        let v = all_verdicts(&features(a, m, kind, p, k, eps, q));
        prop_assert!(!(v.iter().any(|x| x.is_elimination()) && v.iter().any(|x| x.is_survival())), "{:?}", v);
    }

    // More checking never turns a proven elimination into anything else, and
    // less checking never loses a proven survival.
    #[test]
    fn verdicts_are_monotone_in_p(
        a in attach_strategy(), m in m_strategy(), kind in prop::sample::select(MechanismKind::ALL.to_vec()),
        p in 0.0f64..=1.0, dp in 0.0f64..=1.0, k in 1usize..12, eps in prop::sample::select(vec![0.0, 0.1, 0.25]),
    ) {
        let hi = (p + dp).min(1.0);
        let lo_v = theorem_verdict(&features(a.clone(), m.clone(), kind, p, k, eps, 0.0));
        let hi_v = theorem_verdict(&features(a, m, kind, hi, k, eps, 0.0));
        if let (Ok(lo_v), Ok(hi_v)) = (lo_v, hi_v) {
            if lo_v.is_elimination() {
                prop_assert!(hi_v.is_elimination(), "{:?} at {} but {:?} at {}", lo_v, p, hi_v, hi);
            }
            if hi_v.is_survival() {
                prop_assert!(lo_v.is_survival(), "{:?} at {} but {:?} at {}", hi_v, hi, lo_v, p);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coupled_runs_are_clean(p1 in 0.05f64..0.9, dp in 0.0f64..0.5, k in 1usize..5, dk in 0usize..3, vary_k: bool, literal: bool, seed: u64) {
        let mode = if vary_k {
            CouplingMode::VaryK { p: p1, k1: k, k2: k + dk }
        } else {
            CouplingMode::VaryP { p1, p2: (p1 + dp).min(1.0), k }
        };
        let opts = CouplingOptions { literal_stop_set: literal, ..CouplingOptions::default() };
        let t = run_coupled(&AttachmentFunction::preferential(), mode, opts, 400, seed).unwrap();
        prop_assert_eq!(t.violations(), 0, "{:?}", t);
        prop_assert!(t.witness != Some(false));
    }
}
