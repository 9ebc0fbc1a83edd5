mod common;

use common::oracles::*;
use edenet::gpr_sim::{make_dataset, Dataset, Pose, SimConfig};
use edenet::net::{encode_sequence, param_group, Descriptor, EdeNet, NetConfig};
use edenet::numerics::{Param, Tensor};
use edenet::training::*;
use edenet::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Descriptor::normalized(v).unwrap().into_values()
}

fn tiny_dataset(seed: u64) -> Dataset {
    let sim = SimConfig {
        depth_bins: 16,
        channels: 1,
        time_bin: 1.0,
        ..SimConfig::default()
    };
    make_dataset(seed, 50, &sim, 4.0, 5.0, 0.3).unwrap()
}

#[test]
fn five_negative_loss_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let dim = rng.gen_range(2..40);
        let q = random_unit(&mut rng, dim);
        let p = random_unit(&mut rng, dim);
        let negs: Vec<Vec<f64>> = (0..5).map(|_| random_unit(&mut rng, dim)).collect();
        let margin = rng.gen_range(0.05..1.0);
        let refs: Vec<&[f64]> = negs.iter().map(|n| n.as_slice()).collect();
        let got = triplet_loss(&q, &p, &refs, margin).unwrap();
        let want = triplet_ref(&q, &p, &negs, margin);
        assert!(max_rel_diff(&[got], &[want]) < 1e-6, "{got} vs {want}");
        let g = triplet_loss_grad(&q, &p, &refs, margin).unwrap();
        assert_eq!(g.loss, got);
    }
}

#[test]
fn loss_rejects_mixed_dimensions() {
    let q = [1.0, 0.0];
    let n = [1.0, 0.0, 0.0];
    assert!(matches!(
        triplet_loss(&q, &q, &[&n], 0.3),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn mining_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let dim = rng.gen_range(2..16);
        let q = random_unit(&mut rng, dim);
        let rows: Vec<Vec<f64>> = (0..10).map(|_| random_unit(&mut rng, dim)).collect();
        let cands: Vec<(Descriptor, Pose)> = rows
            .iter()
            .map(|r| (Descriptor::new(r.clone()).unwrap(), Pose::new(0.0, 0.0)))
            .collect();
        let got = mine_positive(&Descriptor::new(q.clone()).unwrap(), &cands).unwrap();
        assert_eq!(got, knn_ref(&rows, &q, 1)[0].0);
    }
}

#[test]
fn identical_candidate_is_mined() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = Descriptor::new(random_unit(&mut rng, 8)).unwrap();
    let mut cands: Vec<(Descriptor, Pose)> = (0..5)
        .map(|_| {
            (
                Descriptor::new(random_unit(&mut rng, 8)).unwrap(),
                Pose::new(0.0, 0.0),
            )
        })
        .collect();
    cands.insert(3, (q.clone(), Pose::new(0.0, 0.0)));
    assert_eq!(mine_positive(&q, &cands).unwrap(), 3);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut p = vec![Param::new(Tensor::from_vec(vec![0.5, -1.25, 3.0]))];
    p[0].zero_grad();
    let before = p.clone();
    let mut adam = Adam::new(1e-3);
    for _ in 0..5 {
        assert!(adam.step(&mut p).unwrap());
    }
    assert_eq!(p[0].data(), before[0].data());
}

#[test]
fn adam_first_step_moves_by_lr() {
    for g in [0.01, 1.0, -7.5] {
        let mut p = vec![Param::new(Tensor::from_vec(vec![1.0]))];
        p[0].accumulate(&[g]).unwrap();
        let mut adam = Adam::new(1e-3);
        adam.step(&mut p).unwrap();
        let delta = 1.0 - p[0].data()[0];
        assert!((delta.abs() - 1e-3).abs() < 1e-6, "g={g}: Δ={delta}");
        assert_eq!(delta.signum(), g.signum());
        assert_eq!(p[0].grad(), vec![0.0]);
    }
}

#[test]
fn adam_descends_a_quadratic_bowl() {
    let centre = [0.5, -2.0, 1.0];
    let mut p = vec![Param::new(Tensor::from_vec(vec![3.0, 1.0, -1.0]))];
    let bowl = |x: &[f64]| -> f64 { x.iter().zip(&centre).map(|(a, c)| (a - c).powi(2)).sum() };
    let mut adam = Adam::new(0.01);
    let mut losses = Vec::new();
    for _ in 0..100 {
        let x = p[0].data().to_vec();
        losses.push(bowl(&x));
        let g: Vec<f64> = x.iter().zip(&centre).map(|(a, c)| 2.0 * (a - c)).collect();
        p[0].accumulate(&g).unwrap();
        adam.step(&mut p).unwrap();
    }
    assert_eq!(adam.steps(), 100);
    for w in losses[10..].windows(2) {
        assert!(w[1] < w[0], "{} then {}", w[0], w[1]);
    }
    assert!(losses[99] < losses[0] / 2.0);
}

#[test]
fn non_finite_gradient_aborts_the_step() {
    let mut p = vec![
        Param::new(Tensor::from_vec(vec![1.0, 2.0])),
        Param::new(Tensor::from_vec(vec![3.0])),
    ];
    p[0].accumulate(&[0.1, f64::NAN]).unwrap();
    p[1].accumulate(&[0.5]).unwrap();
    let before: Vec<Vec<f64>> = p.iter().map(|q| q.data().to_vec()).collect();
    let mut adam = Adam::new(1e-3);
    assert!(!adam.step(&mut p).unwrap());
    assert_eq!(adam.steps(), 0);
    for (q, b) in p.iter().zip(&before) {
        assert_eq!(q.data(), b.as_slice());
        assert!(q.grad().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let ds = tiny_dataset(0);
    let cfg = TrainConfig {
        epochs: 0,
        seed: 17,
        ..TrainConfig::default()
    };
    let out = train(&ds.map, &ds.queries, &cfg, &NetConfig::tiny(), |_| {}).unwrap();
    assert_eq!(
        out.checkpoint.net,
        EdeNet::new(&NetConfig::tiny(), 17).unwrap()
    );
    assert_eq!(out.checkpoint.step, 0);
    assert!(out.log.is_empty());
}

#[test]
fn tiny_network_halves_its_training_loss() {
    let ds = tiny_dataset(3);
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        epochs: 50,
        ..TrainConfig::default()
    };
    let out = train(&ds.map, &ds.queries, &cfg, &NetConfig::tiny(), |_| {}).unwrap();
    assert_eq!(out.checkpoint.step, 200);
    let first = out.log[0].loss;
    let last = out.log.last().unwrap().loss;
    assert!(last <= 0.5 * first, "loss {first} → {last}");
    assert!(out
        .log
        .iter()
        .all(|r| (0.0..=1.0).contains(&r.val_recall_at_1)));
}

#[test]
fn training_is_bit_reproducible() {
    let ds = tiny_dataset(1);
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let run = || {
        let mut lines = Vec::new();
        let out = train(&ds.map, &ds.queries, &cfg, &NetConfig::tiny(), |r| {
            lines.push(r.to_string())
        })
        .unwrap();
        let mut bytes = Vec::new();
        out.checkpoint.to_ntc().write(&mut bytes).unwrap();
        (bytes, lines)
    };
    let (a, log_a) = run();
    let (b, log_b) = run();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.len(), 3);
}

#[test]
fn checkpoint_round_trip_reproduces_descriptors() {
    let ds = tiny_dataset(2);
    let cfg = TrainConfig {
        epochs: 2,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let out = train(&ds.map, &ds.queries, &cfg, &NetConfig::tiny(), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ntc");
    out.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, out.checkpoint);
    let window = loaded.net.config.window;
    let a = encode_sequence(&ds.queries, window, &out.checkpoint.net).unwrap();
    let b = encode_sequence(&ds.queries, window, &loaded.net).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_rejects_foreign_containers() {
    let mut ntc = Checkpoint {
        net: EdeNet::new(&NetConfig::tiny(), 0).unwrap(),
        step: 4,
    }
    .to_ntc();
    ntc.tensors.pop();
    assert!(matches!(
        Checkpoint::from_ntc(&ntc),
        Err(Error::Dimension(_))
    ));
    ntc.metadata = serde_json::json!({"kind": "something-else"});
    assert!(matches!(Checkpoint::from_ntc(&ntc), Err(Error::Format(_))));
}

#[test]
fn queries_without_negatives_are_skipped() {
    let ds = tiny_dataset(0);
    // every map window lies within a 1 km radius
    let cfg = TrainConfig {
        epochs: 1,
        geo_radius: 1000.0,
        ..TrainConfig::default()
    };
    let out = train(&ds.map, &ds.queries, &cfg, &NetConfig::tiny(), |_| {}).unwrap();
    assert_eq!(out.checkpoint.step, 0);
    assert_eq!(out.skipped, 28);
    assert!(out.log[0].loss.is_nan());
}

#[test]
fn mismatched_data_is_rejected() {
    let ds = tiny_dataset(0);
    let cfg = TrainConfig::default();
    let wrong = NetConfig {
        depth_bins: 32,
        ..NetConfig::tiny()
    };
    let err = train(&ds.map, &ds.queries, &cfg, &wrong, |_| {}).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn full_network_gradients_pass_the_check() {
    for seed in 0..3 {
        let mut net = EdeNet::new(&NetConfig::tiny(), seed).unwrap();
        let report = triplet_grad_check(&mut net, seed + 100, 1e-5, |_| {}).unwrap();
        let groups = report.grouped(|n| param_group(n).to_string());
        let names: Vec<&str> = groups.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "gabor.lambda",
                "gabor.gamma",
                "gabor.phi",
                "gabor.sigma",
                "daa.f1",
                "daa.f2",
                "shift.w1",
                "shift.b1",
                "shift.w2",
                "shift.b2",
                "agg.w",
                "agg.b"
            ]
        );
        for g in &groups {
            assert!(g.checked > 0, "{} never checked", g.name);
            assert!(
                g.max_rel_error < 1e-3,
                "seed {seed} {}: {}",
                g.name,
                g.max_rel_error
            );
        }
    }
}

#[test]
fn tampered_gradients_are_flagged() {
    let mut net = EdeNet::new(&NetConfig::tiny(), 0).unwrap();
    let report = triplet_grad_check(&mut net, 1, 1e-5, |net| {
        let g: Vec<f64> = net.agg_b.grad().iter().map(|v| v * 1.5 + 1e-3).collect();
        net.agg_b.zero_grad();
        net.agg_b.accumulate(&g).unwrap();
    })
    .unwrap();
    let agg_b = report.params.iter().find(|p| p.name == "agg.b").unwrap();
    assert!(agg_b.max_rel_error > 1e-3);
}

proptest! {
    #[test]
    fn loss_is_non_negative_and_zero_only_when_margins_clear(
        seed in 0u64..1000,
        margin in 0.01f64..1.5,
        count in 1usize..8,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_unit(&mut rng, 6);
        let p = random_unit(&mut rng, 6);
        let negs: Vec<Vec<f64>> = (0..count).map(|_| random_unit(&mut rng, 6)).collect();
        let refs: Vec<&[f64]> = negs.iter().map(|n| n.as_slice()).collect();
        let l = triplet_loss(&q, &p, &refs, margin).unwrap();
        prop_assert!(l >= 0.0);
        let dp = euclid(&q, &p);
        let all_clear = negs.iter().all(|n| euclid(&q, n) >= dp + margin);
        prop_assert_eq!(l == 0.0, all_clear);
    }
}
