//! Exhaustive end-to-end correctness at small scale: every parameter shape,
//! every legal dropout pattern, decode equals the direct survivor sum.

use gsa_core::keys::KeyMaterial;
use gsa_core::params::SchemeParams;
use gsa_core::rounds::InputVector;
use gsa_core::sweep::{exhaustive_dropout_sweep, SweepOptions};
use gsa_core::transcript::{direct_sum, run_aggregation};
use gsa_core::usermatrix::build_validated;

const Q: u64 = 2147483647;

/// Parameter shapes covering both regimes (`s <= k - u` and `s > k - u`),
/// the single-group corner `s = k`, and both survivor extremes.
fn shapes() -> Vec<(usize, usize, usize, u64, usize)> {
    vec![
        (4, 2, 2, Q, 8),
        (4, 1, 4, Q, 3),  // s = k: one group shared by everyone
        (5, 2, 3, Q, 10),
        (5, 4, 3, Q, 24), // s > k - u
        (6, 3, 2, Q, 9),
        (5, 2, 3, 7, 10), // small modulus
        (3, 2, 2, 2, 4),  // binary field, the enumeration-oracle shape
    ]
}

#[test]
fn every_shape_survives_the_full_dropout_sweep() {
    for (k, u, s, q, l) in shapes() {
        let params = SchemeParams::new(k, u, s, q, l).unwrap();
        let scheme = build_validated(&params, 1000 + k as u64, 400).unwrap();
        let report = exhaustive_dropout_sweep(
            &params,
            &scheme.family,
            &scheme.ums,
            &SweepOptions {
                trials_per_pattern: 2,
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            report.all_passed(),
            "(k,u,s,q)=({k},{u},{s},{q}): {} failures, first: {:?}",
            report.failures.len(),
            report.failures.first().map(|f| (&f.u1, &f.u2, &f.error))
        );
    }
}

#[test]
fn survivor_sum_matches_for_a_partial_first_round() {
    let params = SchemeParams::new(5, 2, 3, Q, 20).unwrap();
    let scheme = build_validated(&params, 5, 16).unwrap();
    let keys = KeyMaterial::generate(&params, 77);
    let inputs: Vec<InputVector> =
        (1..=5).map(|k| InputVector::random(&params, k, 500 + k as u64)).collect();
    // user 5 never sends; decode targets the sum over {1,2,3,4}
    let u1 = vec![1, 2, 3, 4];
    let t = run_aggregation(&params, &scheme.family, &scheme.ums, &keys, &inputs, &u1, &[1, 3])
        .unwrap();
    assert_eq!(t.decoded.unwrap(), direct_sum(&params, &inputs, &u1));
}

#[test]
fn message_budgets_hold_on_every_shape() {
    for (k, u, s, q, l) in shapes() {
        let params = SchemeParams::new(k, u, s, q, l).unwrap();
        let scheme = build_validated(&params, 2000 + k as u64, 400).unwrap();
        let keys = KeyMaterial::generate(&params, 3);
        let inputs: Vec<InputVector> =
            (1..=k).map(|i| InputVector::random(&params, i, i as u64)).collect();
        let u1: Vec<usize> = (1..=k).collect();
        let t = run_aggregation(
            &params,
            &scheme.family,
            &scheme.ums,
            &keys,
            &inputs,
            &u1,
            &u1[..u],
        )
        .unwrap();
        for msg in t.round1.values() {
            assert_eq!(msg.symbol_count(), params.rate1().scale_exact(l));
        }
        for msg in t.round2.values() {
            assert_eq!(msg.symbol_count(), params.rate2().scale_exact(l));
            assert_eq!(msg.symbol_count(), l / u);
        }
    }
}
