mod common;

use std::collections::BTreeSet;

use abdux::bundles::{
    bundle_explain, bundle_singletons_pairs, bundle_ub, grid_bundles, load_bundles, BundleConfig,
    BundlePartition,
};
use abdux::fixtures::{self, NetSpec};
use abdux::UbVariant;
use common::{to_mask, Brute, Mask};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_partition(m: usize, rng: &mut impl Rng) -> BundlePartition {
    let mut features: Vec<usize> = (0..m).collect();
    features.shuffle(rng);
    let mut bundles = Vec::new();
    let mut rest = features.as_slice();
    while !rest.is_empty() {
        let k = rng.gen_range(1..=rest.len().min(3));
        bundles.push(rest[..k].to_vec());
        rest = &rest[k..];
    }
    BundlePartition::new(bundles, m).unwrap()
}

fn bundle_mask(p: &BundlePartition, bundles: Mask) -> Mask {
    (0..p.len())
        .filter(|b| bundles >> b & 1 == 1)
        .flat_map(|b| p.bundles()[b].iter().copied())
        .fold(0, |m, f| m | 1 << f)
}

#[test]
fn bundle_singletons_and_pairs_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (net, inst) in fixtures::corpus(&NetSpec::binary(4..=9), 500, 60) {
        let brute = Brute::new(&net, &inst);
        let p = random_partition(inst.num_features(), &mut rng);
        let (singletons, pairs) = bundle_singletons_pairs(&net, &inst, &p).unwrap();
        let contrastive = |bundles: Mask| brute.is_contrastive(bundle_mask(&p, bundles));
        let expected: BTreeSet<usize> = (0..p.len()).filter(|&b| contrastive(1 << b)).collect();
        assert_eq!(singletons, expected);
        for a in 0..p.len() {
            for b in a + 1..p.len() {
                let expect = !expected.contains(&a)
                    && !expected.contains(&b)
                    && contrastive(1 << a | 1 << b);
                assert_eq!(pairs.contains(&(a, b)), expect, "{a} {b}");
            }
        }
        // A contrastive singleton bundle holds some contrastive set, so it
        // meets every explanation.
        for &b in &singletons {
            let inside = bundle_mask(&p, 1 << b);
            assert!(brute.minimal_diffs.iter().any(|&d| d & !inside == 0));
        }
    }
}

#[test]
fn bundle_bounds_bracket_brute_force_optima() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (net, inst) in fixtures::corpus(&NetSpec::binary(4..=9), 501, 40) {
        let brute = Brute::new(&net, &inst);
        let p = random_partition(inst.num_features(), &mut rng);
        let r = bundle_explain(
            &net,
            &inst,
            &p,
            &BundleConfig {
                refined: true,
                ..BundleConfig::default()
            },
        )
        .unwrap();
        let (min_bundles, min_cost) = brute.minimum_bundle_explanation(&p);
        let min_features = brute.minimum_size();
        assert!(r.lb_bundles <= min_bundles && min_bundles <= r.ub_bundles);
        assert!(r.lb_method1 <= min_cost && min_cost <= r.ub_features);
        assert!(r.lb_method2 <= min_features);
        let refined = r.lb_refined.unwrap();
        assert!(r.lb_method2 <= refined && refined <= min_features);
        assert!(r.lb_features <= min_features && min_features <= r.ub_features);
        assert_eq!(r.ub_features, r.flattened.len());
        assert!(brute.is_explanation(to_mask(&r.flattened)));
        // Dropping any kept bundle breaks the explanation.
        let kept = to_mask(&r.bundle_explanation);
        for &b in &r.bundle_explanation {
            assert!(!brute.is_bundle_explanation(&p, kept & !(1 << b)));
        }
    }
}

#[test]
fn every_strategy_yields_a_minimal_bundle_explanation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (net, inst) in fixtures::corpus(&NetSpec::binary(4..=9), 502, 30) {
        let brute = Brute::new(&net, &inst);
        let p = random_partition(inst.num_features(), &mut rng);
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.shuffle(&mut rng);
        for variant in UbVariant::ALL {
            let r = bundle_ub(&net, &inst, &p, &order, variant).unwrap();
            let kept = to_mask(&r.bundle_explanation);
            assert!(brute.is_bundle_explanation(&p, kept), "{variant}");
            for &b in &r.bundle_explanation {
                assert!(
                    !brute.is_bundle_explanation(&p, kept & !(1 << b)),
                    "{variant}"
                );
            }
        }
    }
}

#[test]
fn partitions_round_trip_and_reject_bad_input() {
    let g = grid_bundles(5, 3, 2).unwrap();
    assert_eq!(
        g.bundles(),
        &[
            vec![0, 1, 5, 6],
            vec![2, 3, 7, 8],
            vec![4, 9],
            vec![10, 11],
            vec![12, 13],
            vec![14],
        ]
    );
    assert_eq!(
        BundlePartition::from_json_str(&g.to_json_string(), 15).unwrap(),
        g
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundles.json");
    std::fs::write(&path, g.to_json_string()).unwrap();
    assert_eq!(load_bundles(&path, 15).unwrap(), g);
    assert!(load_bundles(&path, 16).is_err());

    for bad in [
        "[[0,1],[1,2]]",
        "[[0],[2]]",
        "[[0,1],[]]",
        "[[0,1,3]]",
        "not json",
    ] {
        assert!(BundlePartition::from_json_str(bad, 3).is_err(), "{bad}");
    }
    assert!(grid_bundles(0, 3, 1).is_err());
    assert_eq!(g.owners()[9], 2);
}
