use lastlayer::data::{generate, DatasetSpec, Family};
use lastlayer::net::{
    gradient, loss_eval, max_step_size, train, Activation, Architecture, LayerSpec, LossKind, NetworkParams,
    SnapshotSchedule, TrainConfig,
};
use proptest::prelude::*;

fn blob(n: usize, scale: f64, seed: u64) -> lastlayer::data::LabeledDataset {
    generate(&DatasetSpec {
        family: Family::Blob,
        sample_count: n,
        scale,
        class_count: 2,
        seed,
    })
    .unwrap()
}

fn smooth_net(outputs: usize, seed: u64) -> NetworkParams {
    let arch = Architecture {
        input_dim: 2,
        hidden: vec![
            LayerSpec {
                width: 4,
                activation: Activation::Square,
            },
            LayerSpec {
                width: 2,
                activation: Activation::Identity,
            },
        ],
        outputs,
        last_bias: true,
    };
    NetworkParams::init(&arch, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backprop_matches_central_differences(seed in 0u64..10_000, which in 0usize..3) {
        let kind = [LossKind::Exponential, LossKind::Logistic, LossKind::CrossEntropy][which];
        let ds = blob(6, 1.0, seed);
        let p = smooth_net(kind.outputs_for(2), seed);
        let (_, g) = gradient(&p, &ds, kind).unwrap();
        let flat = p.flatten();
        let h = 1e-5;
        for (i, gi) in g.flatten().into_iter().enumerate() {
            let at = |d: f64| {
                let mut v = flat.clone();
                v[i] += d;
                let mut q = p.clone();
                q.assign_flat(&v).unwrap();
                loss_eval(&q, &ds, kind).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            prop_assert!((gi - fd).abs() <= 1e-5 * gi.abs().max(fd.abs()).max(1e-4), "coord {i}: {gi} vs {fd}");
        }
    }

    #[test]
    fn admissible_step_decreases_logistic_loss(seed in 0u64..10_000, frac in 0.1f64..0.99) {
        let ds = blob(50, 100.0, seed);
        let p0 = NetworkParams::init(&Architecture::linear(2, 1, false), seed);
        let lr = frac * max_step_size(&p0, &ds, LossKind::Logistic).unwrap();
        let mut cfg = TrainConfig::gd(LossKind::Logistic, lr, 50);
        cfg.snapshots = SnapshotSchedule::Every { interval: 1 };
        let trace = train(&p0, &ds, &cfg).unwrap();
        let mut prev = loss_eval(&p0, &ds, LossKind::Logistic).unwrap();
        for s in &trace.snapshots {
            prop_assert!(s.loss <= prev, "loss rose at {}: {} -> {}", s.iteration, prev, s.loss);
            prev = s.loss;
        }
    }
}

#[test]
fn recorded_params_follow_the_snapshots() {
    let ds = blob(30, 1.0, 3);
    let p0 = smooth_net(1, 3);
    let mut cfg = TrainConfig::gd(LossKind::Logistic, 0.01, 40);
    cfg.snapshots = SnapshotSchedule::Every { interval: 10 };
    let plain = train(&p0, &ds, &cfg).unwrap();
    assert!(plain.snapshot_params.is_empty());

    cfg.record_params = true;
    let rec = train(&p0, &ds, &cfg).unwrap();
    assert_eq!(rec.snapshot_params.len(), rec.snapshots.len());
    for (s, p) in rec.snapshots.iter().zip(&rec.snapshot_params) {
        assert_eq!(s.last_weight, p.last_weight);
        assert_eq!(s.last_bias, p.last_bias);
    }
    assert_eq!(rec.snapshot_params.last().unwrap(), rec.final_params());
    assert_eq!(rec.snapshots, plain.snapshots);
}
