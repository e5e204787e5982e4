use slimconv::augment::{AugmentKind, AugmentOp};
use slimconv::data::{self, Dataset};
use slimconv::train::{self, MixupDelta, SwaState, TrainConfig};
use slimconv::zoo::{self, BuildOptions};
use slimconv::{Dims, Error, Layer, LayerSpec, Network, Rng, Tensor};

fn tiny_net(arch: &str, seed: u64, classes: usize) -> Network<f32> {
    let opts = BuildOptions::default().with_width(4).with_input_size(8).with_classes(classes);
    zoo::build(arch, &opts, &mut Rng::new(seed)).unwrap()
}

fn weights(net: &Network<f32>) -> Vec<u32> {
    net.params().flat_map(|p| p.data().iter().map(|v| v.to_bits())).collect()
}

fn linear_probe(classes: usize, size: usize, rng: &mut Rng) -> Network<f32> {
    let specs = [LayerSpec::gap(1), LayerSpec::dense(1, classes), LayerSpec::softmax(classes)];
    let layers = specs.iter().map(|&s| Layer::new(s, rng).unwrap()).collect();
    Network::new("probe", Dims::new(1, 1, size, size).unwrap(), layers).unwrap()
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let set = data::synth(3, 10, 8, 1).unwrap();
    let mut net = tiny_net("custom140_dw", 2, 3);
    let before = weights(&net);
    let acc_before = train::evaluate(&net, &set).unwrap().accuracy;
    let cfg = TrainConfig { epochs: 1, learning_rate: 0.0, min_learning_rate: 0.0, batch_size: 8, ..Default::default() };
    let out = train::train(&mut net, &set, Some(&set), &cfg).unwrap();
    assert_eq!(weights(&net), before);
    assert_eq!(out.report.epochs[0].eval_acc, Some(acc_before));
}

#[test]
fn zero_epochs_is_a_no_op() {
    let set = data::synth(3, 4, 8, 1).unwrap();
    let mut net = tiny_net("custom140_3x3", 3, 3);
    let before = weights(&net);
    let cfg = TrainConfig { epochs: 0, swa: true, ..Default::default() };
    let out = train::train(&mut net, &set, None, &cfg).unwrap();
    assert!(out.report.epochs.is_empty());
    assert_eq!(out.report.to_csv().lines().count(), 1);
    assert_eq!(weights(&net), before);
    assert_eq!(weights(&out.swa.unwrap()), before);
}

#[test]
fn same_seed_is_bit_identical() {
    let set = data::synth(3, 12, 8, 4).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 7,
        seed: 11,
        swa: true,
        mixup: Some(MixupDelta::default()),
        label_smoothing: Some(0.1),
        augment: vec![AugmentOp::new(AugmentKind::Rotation { max_degrees: 15.0 }, 0.5).unwrap()],
        ..Default::default()
    };
    let run = || {
        let mut net = tiny_net("custom340_dw", 5, 3);
        let out = train::train(&mut net, &set, None, &cfg).unwrap();
        (weights(&net), weights(&out.swa.unwrap()), out.report.epochs.iter().map(|e| e.train_loss).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());

    let mut other = cfg.clone();
    other.seed = 12;
    let mut net = tiny_net("custom340_dw", 5, 3);
    train::train(&mut net, &set, None, &other).unwrap();
    assert_ne!(weights(&net), run().0);
}

#[test]
fn every_technique_alone_and_combined() {
    let set = data::synth(3, 6, 8, 6).unwrap();
    let cutout = AugmentOp::new(AugmentKind::Cutout { size: 3 }, 0.5).unwrap();
    let base = TrainConfig { epochs: 2, batch_size: 6, seed: 1, ..Default::default() };
    let configs = [
        ("blurpool", BuildOptions::default().with_blurpool(true), base.clone()),
        ("se", BuildOptions::default().with_squeeze_excite(true), base.clone()),
        ("swa", BuildOptions::default(), TrainConfig { swa: true, ..base.clone() }),
        ("mixup", BuildOptions::default(), TrainConfig { mixup: Some(MixupDelta::default()), ..base.clone() }),
        ("smoothing", BuildOptions::default(), TrainConfig { label_smoothing: Some(0.1), ..base.clone() }),
        ("cutout", BuildOptions::default(), TrainConfig { augment: vec![cutout], ..base.clone() }),
        (
            "all",
            BuildOptions::default().with_blurpool(true).with_squeeze_excite(true),
            TrainConfig {
                swa: true,
                mixup: Some(MixupDelta::Fixed(0.7)),
                label_smoothing: Some(0.1),
                augment: vec![cutout],
                ..base.clone()
            },
        ),
    ];
    for (name, opts, cfg) in configs {
        let opts = opts.with_width(4).with_input_size(8).with_classes(3);
        let mut net: Network<f32> = zoo::build("custom590_dw", &opts, &mut Rng::new(2)).unwrap();
        let out = train::train(&mut net, &set, Some(&set), &cfg).unwrap();
        assert_eq!(out.report.epochs.len(), 2, "{name}");
        assert_eq!(out.swa.is_some(), cfg.swa, "{name}");
        for e in &out.report.epochs {
            assert!(e.train_loss.is_finite());
            assert!((0.0..=1.0).contains(&e.train_acc));
            assert!((0.0..=1.0).contains(&e.eval_acc.unwrap()));
        }
    }
}

#[test]
fn early_stop_at_target_accuracy() {
    let set = data::synth(2, 10, 8, 2).unwrap();
    let mut net = tiny_net("custom140_3x3", 1, 2);
    let cfg = TrainConfig { epochs: 50, target_train_accuracy: Some(0.0), ..Default::default() };
    let out = train::train(&mut net, &set, None, &cfg).unwrap();
    assert_eq!(out.report.epochs.len(), 1);
}

#[test]
fn incompatible_dataset_rejected() {
    let set = data::synth(4, 3, 8, 0).unwrap();
    let mut net = tiny_net("custom140_dw", 0, 3);
    assert!(matches!(train::train(&mut net, &set, None, &TrainConfig::default()), Err(Error::ShapeMismatch(_))));
    assert!(train::evaluate(&net, &set).is_err());
    let bad = TrainConfig { batch_size: 0, ..Default::default() };
    let set = data::synth(3, 3, 8, 0).unwrap();
    assert!(train::train(&mut net, &set, None, &bad).is_err());
}

#[test]
fn constant_logits_score_chance() {
    let set = data::synth(10, 5, 8, 3).unwrap();
    let mut net = tiny_net("custom140_dw", 0, 10);
    for p in net.params_mut() {
        p.fill(0.0);
    }
    let report = train::evaluate(&net, &set).unwrap();
    assert_eq!(report.accuracy, 0.1);
    assert!(report.predictions.iter().all(|&p| p == 0));
    assert_eq!(report.per_class_accuracy[0], Some(1.0));
    assert_eq!(report.per_class_accuracy[1], Some(0.0));
    assert!((report.mean_loss - 10f64.ln()).abs() < 1e-6);
}

#[test]
fn oracle_network_scores_one() {
    let images: Vec<Tensor<f32>> = (0..20).map(|i| Tensor::full((1, 1, 4, 4), (i % 2) as f32).unwrap()).collect();
    let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
    let set = Dataset::new(images, labels, 2, Vec::new()).unwrap();
    let specs = [LayerSpec::gap(1), LayerSpec::dense(1, 2), LayerSpec::softmax(2)];
    let params = vec![
        vec![],
        vec![
            Tensor::from_values((1, 1, 2, 1), vec![-1.0, 1.0]).unwrap(),
            Tensor::from_values((1, 1, 1, 2), vec![0.5, -0.5]).unwrap(),
        ],
        vec![],
    ];
    let layers = specs.iter().zip(params).map(|(&s, p)| Layer::with_params(s, p).unwrap()).collect();
    let net = Network::new("oracle", Dims::new(1, 1, 4, 4).unwrap(), layers).unwrap();
    assert_eq!(train::evaluate(&net, &set).unwrap().accuracy, 1.0);
}

#[test]
fn accuracy_matches_manual_count() {
    let set = data::synth(5, 30, 8, 9).unwrap();
    let net = tiny_net("custom340_3x3", 4, 5);
    let report = train::evaluate(&net, &set).unwrap();
    let mut correct = 0;
    for i in 0..set.len() {
        let probs = net.forward(set.image(i)).unwrap();
        let mut best = 0;
        for k in 1..5 {
            if probs.data()[k] > probs.data()[best] {
                best = k;
            }
        }
        assert_eq!(best, report.predictions[i]);
        if best == set.label(i) {
            correct += 1;
        }
    }
    assert_eq!(report.accuracy, correct as f64 / set.len() as f64);
}

#[test]
fn averaging_identical_networks_changes_nothing() {
    let set = data::synth(3, 10, 8, 5).unwrap();
    let net = tiny_net("custom590_3x3", 6, 3);
    let mut swa = SwaState::new(1);
    for epoch in 1..=5 {
        swa.update(&net, epoch).unwrap();
    }
    let avg = swa.averaged().unwrap();
    assert_eq!(weights(avg), weights(&net));
    assert_eq!(train::evaluate(avg, &set).unwrap(), train::evaluate(&net, &set).unwrap());
}

#[test]
fn full_batch_loss_is_non_increasing_on_a_linear_model() {
    let set = data::synth(4, 10, 8, 7).unwrap();
    let mut net = linear_probe(4, 8, &mut Rng::new(1));
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: set.len(),
        learning_rate: 0.05,
        min_learning_rate: 0.05,
        momentum: 0.0,
        grad_clip: None,
        ..Default::default()
    };
    let out = train::train(&mut net, &set, None, &cfg).unwrap();
    for pair in out.report.epochs.windows(2) {
        assert!(pair[1].train_loss <= pair[0].train_loss + 1e-12);
    }
}

#[test]
fn synthetic_classes_are_separable_by_a_small_cnn() {
    let set = data::synth(10, 200, 28, 7).unwrap();
    let mut rng = Rng::new(1);
    let specs = [
        LayerSpec::conv3(1, 8),
        LayerSpec::relu(8),
        LayerSpec::max_pool2(8),
        LayerSpec::conv3(8, 16),
        LayerSpec::relu(16),
        LayerSpec::gap(16),
        LayerSpec::dense(16, 10),
        LayerSpec::softmax(10),
    ];
    let layers = specs.iter().map(|&s| Layer::new(s, &mut rng).unwrap()).collect();
    let mut net: Network<f32> = Network::new("probe", Dims::new(1, 1, 28, 28).unwrap(), layers).unwrap();
    let cfg = TrainConfig { epochs: 10, learning_rate: 0.1, seed: 7, ..Default::default() };
    let out = train::train(&mut net, &set, None, &cfg).unwrap();
    assert!(out.report.last().unwrap().train_acc >= 0.95);
    assert!(train::evaluate(&net, &set).unwrap().accuracy >= 0.95);
}

#[test]
fn clip_scales_to_max_norm() {
    let mut g = vec![Tensor::from_values((1, 1, 1, 2), vec![3.0f64, 4.0]).unwrap()];
    assert_eq!(train::clip_global_norm(&mut g, 1.0), 5.0);
    assert!((g[0].data()[0] - 0.6).abs() < 1e-12 && (g[0].data()[1] - 0.8).abs() < 1e-12);
    assert_eq!(train::clip_global_norm(&mut g, 10.0), 1.0);
}
