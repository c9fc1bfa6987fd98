mod common;

use common::{fd_jet, jet_rel_err, random_net, random_points, rng};
use proptest::prelude::*;
use rodpinn::{jet_batch, jet_forward, Evaluator, MlpNetwork};

#[test]
fn jets_match_richardson_differences() {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let net = random_net(&mut r, 3, 16, 2);
        for p in random_points(&mut r, 20, 4.0) {
            let jets = jet_forward(&net, p).unwrap();
            for (k, jet) in jets.iter().enumerate() {
                worst = worst.max(jet_rel_err(jet, &fd_jet(&net, p, k, 0.02), 1e-3));
            }
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn wide_and_deep_nets_too() {
    // Widths beyond one evaluator chunk row and four hidden layers.
    let mut r = rng(12);
    let net = MlpNetwork::initialized(vec![2, 40, 40, 40, 40, 3], rodpinn::Initializer::new(
        rodpinn::InitKind::GlorotUniform,
        5,
    ))
    .unwrap();
    for p in random_points(&mut r, 10, 4.0) {
        for (k, jet) in jet_forward(&net, p).unwrap().iter().enumerate() {
            let err = jet_rel_err(jet, &fd_jet(&net, p, k, 0.02), 1e-3);
            assert!(err < 1e-6, "output {k} at {p:?}: {err:e}");
        }
    }
}

#[test]
fn batch_spanning_several_chunks_matches_pointwise() {
    let mut r = rng(13);
    let net = random_net(&mut r, 2, 12, 3);
    let pts = random_points(&mut r, 1300, 4.0);
    let batch = jet_batch(&net, &pts).unwrap();
    for (i, &p) in pts.iter().enumerate().step_by(37) {
        let single = jet_forward(&net, p).unwrap();
        for (k, jet) in single.iter().enumerate() {
            assert!(jet_rel_err(jet, &batch.get(i, k), 1e-12) < 1e-12, "point {i} output {k}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batched_jets_agree_with_pointwise(seed in any::<u64>(), n in 1usize..40, workers in 1usize..4) {
        let mut r = rng(seed);
        let net = random_net(&mut r, 3, 10, 2);
        let pts = random_points(&mut r, n, 4.0);
        let ev = Evaluator::new(workers).unwrap();
        let (batch, _) = ev.forward(&net, &pts).unwrap();
        for (i, &p) in pts.iter().enumerate() {
            for (k, jet) in jet_forward(&net, p).unwrap().iter().enumerate() {
                prop_assert!(jet_rel_err(jet, &batch.get(i, k), 1e-12) < 1e-12);
            }
        }
    }

    #[test]
    fn jets_match_differences_anywhere(seed in any::<u64>(), x in 0.0f64..1.0, t in 0.0f64..8.0) {
        let mut r = rng(seed);
        let net = random_net(&mut r, 2, 8, 1);
        let jet = jet_forward(&net, (x, t)).unwrap()[0];
        let fd = fd_jet(&net, (x, t), 0, 0.02);
        prop_assert!(jet_rel_err(&jet, &fd, 1e-3) < 1e-6);
    }

    #[test]
    fn value_component_is_the_plain_forward_pass(seed in any::<u64>(), x in -1.0f64..2.0, t in -1.0f64..9.0) {
        let mut r = rng(seed);
        let net = random_net(&mut r, 3, 16, 3);
        let plain = net.forward(&[x, t]).unwrap();
        for (k, jet) in jet_forward(&net, (x, t)).unwrap().iter().enumerate() {
            prop_assert!((jet.v - plain[k]).abs() <= 1e-14 * (1.0 + plain[k].abs()));
        }
    }
}
