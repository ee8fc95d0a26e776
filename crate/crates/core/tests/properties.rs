use proptest::prelude::*;
use proptest::strategy::Strategy as _;

use qgamble::protocol::{
    guest_session, host_session, memory_pair, serve_nature, GuestOptions, LedgerRow, Referee, RemoteNature,
    RoundGrammar, SessionOptions, SharedReferee,
};
use qgamble::qstate::state_vector_probs;
use qgamble::rng::{stream, uniform};
use qgamble::{outcome_probs, run_session, AlicePolicy, BobPolicy, GameConfig, Strategy};
use std::sync::{Arc, Mutex};

fn alice_policy() -> impl proptest::strategy::Strategy<Value = AlicePolicy> {
    prop_oneof![
        Just(AlicePolicy::NashHonest),
        (0.0f64..=1.0).prop_map(AlicePolicy::FixedAlpha),
        (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..3.0)
            .prop_map(|(q, alpha_otherwise, penalty)| AlicePolicy::SpotCheck { q, alpha_otherwise, penalty }),
    ]
}

fn bob_policy() -> impl proptest::strategy::Strategy<Value = BobPolicy> {
    prop_oneof![
        Just(BobPolicy::NashHonest),
        (0.0f64..=1.0).prop_map(BobPolicy::FixedBeta),
        (0.0f64..=1.0).prop_map(BobPolicy::Liar),
    ]
}

#[test]
fn closed_form_matches_state_vectors() {
    let mut rng = stream(2024, 0);
    for _ in 0..10_000 {
        let (a, b, g) = (uniform(&mut rng), uniform(&mut rng), 1.0 - uniform(&mut rng));
        let p = outcome_probs(&Strategy::new(a, b).unwrap(), &GameConfig::new(g, 2.0).unwrap()).unwrap();
        let q = state_vector_probs(a, b, g).unwrap();
        for (x, y) in [(p.p1, q[0]), (p.p2, q[1]), (p.p3, q[2])] {
            assert!((x - y).abs() <= 1e-10, "({a}, {b}, {g}): {x} vs {y}");
        }
    }
}

#[test]
fn session_frequencies_match_closed_form() {
    let mut rng = stream(5, 0);
    let n = 100_000u64;
    for k in 0..10 {
        let (a, b) = (uniform(&mut rng), uniform(&mut rng));
        let g = 0.05 + 0.9 * uniform(&mut rng);
        let cfg = GameConfig::new(g, 1.5).unwrap();
        let ledger = run_session(&cfg, &AlicePolicy::FixedAlpha(a), &BobPolicy::FixedBeta(b), n, k).unwrap();
        let f = ledger.outcome_counts().frequencies();
        let p = outcome_probs(&Strategy::new(a, b).unwrap(), &cfg).unwrap();
        for (hat, want) in [(f.p1, p.p1), (f.p2, p.p2), (f.p3, p.p3)] {
            let sigma = (want * (1.0 - want) / n as f64).sqrt();
            assert!((hat - want).abs() <= 5.0 * sigma + 1e-12, "({a}, {b}, {g}): {hat} vs {want}");
        }
    }
}

#[test]
fn honest_nash_session_is_fair() {
    let ledger = run_session(&GameConfig::fair_coin(), &AlicePolicy::NashHonest, &BobPolicy::NashHonest, 1_000_000, 3)
        .unwrap();
    let s = ledger.summary();
    assert!(ledger.records.iter().all(|r| r.settlement_bob.abs() == 1.0));
    assert!(s.mean_gain.abs() <= 4.0 * s.stderr, "{s:?}");
}

#[test]
fn spot_checks_cost_the_liar() {
    let cfg = GameConfig::fair_coin();
    let checked = AlicePolicy::SpotCheck { q: 0.2, alpha_otherwise: 1.0 / 3.0, penalty: 1.0 };
    let unchecked = AlicePolicy::SpotCheck { q: 0.0, alpha_otherwise: 1.0 / 3.0, penalty: 1.0 };
    let a = run_session(&cfg, &checked, &BobPolicy::Liar(0.25), 100_000, 1).unwrap().summary();
    let b = run_session(&cfg, &unchecked, &BobPolicy::Liar(0.25), 100_000, 1).unwrap().summary();
    assert_eq!(b.mean_gain, cfg.r_gain);
    assert!(a.mean_gain < b.mean_gain);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ledgers_obey_their_invariants(
        a in alice_policy(),
        b in bob_policy(),
        g in 0.05f64..0.99,
        r in 0.1f64..5.0,
        seed in any::<u64>(),
    ) {
        let cfg = GameConfig::new(g, r).unwrap();
        let ledger = run_session(&cfg, &a, &b, 300, seed).unwrap();
        prop_assert!(!ledger.is_aborted());
        prop_assert_eq!(ledger.bob_total + ledger.alice_total, 0.0);
        let sum: f64 = ledger.records.iter().map(|r| r.settlement_bob).sum();
        prop_assert_eq!(sum, ledger.bob_total);
        for rec in &ledger.records {
            prop_assert!([r, -1.0, -a.penalty()].contains(&rec.settlement_bob));
            if rec.lie_detected {
                prop_assert!(matches!(b, BobPolicy::Liar(_)));
                prop_assert!(rec.spot_check);
            }
            if !matches!(b, BobPolicy::Liar(_)) {
                prop_assert_eq!(rec.bob_claim, rec.outcome);
            }
        }
        let rows = LedgerRow::parse_csv(&ledger.to_csv()).unwrap();
        prop_assert_eq!(rows.len(), ledger.records.len());
    }

    #[test]
    fn transcripts_follow_the_grammar(
        a in alice_policy(),
        b in bob_policy(),
        g in 0.05f64..0.99,
        seed in any::<u64>(),
    ) {
        let cfg = GameConfig::new(g, 1.0).unwrap();
        let referee: SharedReferee = Arc::new(Mutex::new(Referee::new(cfg)));
        let (host_proto, guest_proto) = memory_pair();
        let (host_nature, guest_nature) = memory_pair();
        let run = std::thread::scope(|s| {
            let served = Arc::clone(&referee);
            s.spawn(move || serve_nature(host_nature, served));
            s.spawn(move || {
                let nature = RemoteNature::new(guest_nature, None).unwrap();
                guest_session(guest_proto, nature, &b, &GuestOptions::default())
            });
            host_session(host_proto, &referee, &a, 50, seed, &SessionOptions::default()).unwrap()
        });
        let mut grammar = RoundGrammar::new();
        for m in &run.transcript {
            prop_assert!(grammar.accept(m.kind()).is_ok());
        }
        prop_assert!(grammar.at_boundary());
        prop_assert_eq!(run.ledger, run_session(&cfg, &a, &b, 50, seed).unwrap());
    }
}
