mod common;

use std::sync::Arc;
use std::thread;

use abdux::explain::SharedState;
use abdux::fixtures::{self, NetSpec};
use abdux::{ExplainConfig, Explainer, UbVariant};
use common::{brute_mvc, to_mask, Brute};

#[test]
fn parallel_runs_with_jitter_match_deterministic_runs() {
    for (i, (net, inst)) in fixtures::corpus(&NetSpec::small(), 311, 25)
        .into_iter()
        .enumerate()
    {
        let brute = Brute::new(&net, &inst);
        let ex = Explainer::new(&net, &inst);
        for variant in [UbVariant::Sequential, UbVariant::Binary] {
            let base = ExplainConfig {
                variant,
                ..ExplainConfig::default()
            };
            let serial = ex.orchestrate(&base).unwrap();
            let parallel = ex
                .orchestrate(&ExplainConfig {
                    parallel: true,
                    jitter: Some(i as u64),
                    ..base
                })
                .unwrap();
            // Workers only share sound facts, so the trajectory cannot change.
            assert_eq!(parallel.explanation, serial.explanation);
            assert_eq!(parallel.lb, serial.lb);
            assert_eq!(parallel.singletons, serial.singletons);
            assert_eq!(parallel.pairs, serial.pairs);
            assert!(brute.is_minimal(to_mask(&parallel.explanation)));
            for w in parallel.snapshots.windows(2) {
                assert!(w[1].ub <= w[0].ub && w[1].lb >= w[0].lb);
                assert!(w[1].t >= w[0].t);
            }
        }
    }
}

#[test]
fn shared_state_stays_monotone_under_contention() {
    let n = 40;
    let state = Arc::new(SharedState::new(n));
    let handles: Vec<_> = (0..8)
        .map(|t| {
            let state = Arc::clone(&state);
            thread::spawn(move || {
                // Singletons in 0..10, pairs in 10..25, freed units in 25..40.
                for k in 0..200 {
                    let r = t * 7 + k * 3;
                    match k % 4 {
                        0 => {
                            state.add_singleton(r % 10);
                        }
                        1 => {
                            let a = 10 + r % 15;
                            let b = 10 + (r / 15 + a + 1) % 15;
                            if a != b {
                                state.add_pair(a, b);
                            }
                        }
                        2 => state.mark_freed(&[25 + r % 15]),
                        _ => assert!(state.lb() <= n),
                    }
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let snaps = state.snapshots();
    assert!(!snaps.is_empty());
    for w in snaps.windows(2) {
        assert!(w[1].ub <= w[0].ub, "{:?}", w);
        assert!(w[1].lb >= w[0].lb, "{:?}", w);
    }
    let last = snaps.last().unwrap();
    assert_eq!((last.ub, last.lb), (state.ub(), state.lb()));
    assert_eq!(state.ub(), n - state.free().len());
    let edges: Vec<(usize, usize)> = state
        .pairs()
        .edges()
        .iter()
        .map(|&(a, b)| (a - 10, b - 10))
        .collect();
    assert_eq!(state.lb(), state.singletons().len() + brute_mvc(15, &edges));
}
