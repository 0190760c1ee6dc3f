use std::collections::BTreeSet;

use edgeamc::datagen::{build_dataset, Dataset, Split, NUM_CLASSES};
use edgeamc::trainer::{self, Optimizer, TrainConfig};
use edgeamc::zoo::{weight_key, Architecture};
use edgeamc::Error;

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 64,
        ..Default::default()
    }
}

/// 32 training frames spread over every class at high SNR.
fn tiny_split() -> Dataset {
    let d = build_dataset(2, 3).unwrap();
    let mut train = Vec::new();
    for c in 0..NUM_CLASSES {
        let cell: Vec<usize> = d
            .indices(Split::Train)
            .iter()
            .copied()
            .filter(|&i| d.frames()[i].label as usize == c && d.frames()[i].snr_db >= 10)
            .take(3)
            .collect();
        train.extend(cell);
    }
    train.truncate(32);
    train.sort_unstable();
    let test = d.indices(Split::Test)[..64].to_vec();
    Dataset::with_split(d.frames().to_vec(), d.split_seed(), train, test).unwrap()
}

#[test]
fn memorizes_32_frames() {
    let d = tiny_split();
    assert_eq!(d.indices(Split::Train).len(), 32);
    let m = Architecture::ResnetMini.build(0.25, 4).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 32,
        ..Default::default()
    };
    let out = trainer::train(&m, &d, &cfg).unwrap();
    let acc = trainer::evaluate(&out.model, &d, Split::Train).unwrap().overall_acc;
    assert_eq!(acc, 1.0, "final loss {:?}", out.loss_history.last());
}

#[test]
fn same_seed_is_bitwise_reproducible() {
    let d = build_dataset(2, 5).unwrap();
    let m = Architecture::InceptionMini.build(0.125, 6).unwrap();
    let a = trainer::train(&m, &d, &small_cfg(2)).unwrap();
    let b = trainer::train(&m, &d, &small_cfg(2)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.model.hash(), b.model.hash());
    let bits = |h: &[f64]| h.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.loss_history), bits(&b.loss_history));
    let c = trainer::train(&m, &d, &TrainConfig { seed: 1, ..small_cfg(2) }).unwrap();
    assert_ne!(a.model.hash(), c.model.hash());
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let d = build_dataset(1, 7).unwrap();
    let m = Architecture::Vtcnn2.build(1.0, 8).unwrap();
    for optimizer in [Optimizer::Sgd, Optimizer::adam()] {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            optimizer,
            ..small_cfg(1)
        };
        let out = trainer::train(&m, &d, &cfg).unwrap();
        assert_eq!(out.model.params(), m.params());
    }
}

#[test]
fn frozen_layer_is_bitwise_unchanged() {
    let d = build_dataset(2, 9).unwrap();
    let m = Architecture::ResnetMini.build(0.125, 10).unwrap();
    let fc = m.first_fc().to_string();
    let cfg = TrainConfig {
        frozen: BTreeSet::from([fc.clone()]),
        ..small_cfg(2)
    };
    let out = trainer::train(&m, &d, &cfg).unwrap();
    for key in [weight_key(&fc), format!("{fc}.bias")] {
        let (a, b) = (m.param(&key).unwrap(), out.model.param(&key).unwrap());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{key}");
    }
    assert_ne!(m.param("fc2.weight"), out.model.param("fc2.weight"));
}

#[test]
fn loss_falls_early_on() {
    let d = build_dataset(4, 11).unwrap();
    let m = Architecture::ResnetMini.build(0.25, 12).unwrap();
    let out = trainer::train(&m, &d, &small_cfg(6)).unwrap();
    let h = &out.loss_history;
    let falls = h.windows(2).take(5).filter(|w| w[1] <= w[0]).count();
    assert!(falls >= 4, "{h:?}");
    assert!(out.model.provenance.trained);
    assert!(!m.provenance.trained);
}

#[test]
fn evaluation_tallies_are_consistent() {
    let d = build_dataset(1, 13).unwrap();
    let m = Architecture::InceptionMini.build(0.125, 14).unwrap();
    let e = trainer::evaluate(&m, &d, Split::Test).unwrap();
    let test = d.indices(Split::Test);
    assert_eq!(e.total(), test.len() as u64);
    let confusion_total: u64 = e.confusion.iter().flatten().sum();
    assert_eq!(confusion_total, e.total());
    let correct: u64 = (0..NUM_CLASSES).map(|c| e.confusion[c][c]).sum();
    assert!((e.overall_acc - correct as f64 / e.total() as f64).abs() < 1e-15);
    let pred = trainer::predict(&m, &d, test).unwrap();
    assert_eq!(trainer::score(&d, test, &pred).unwrap(), e);
    // Probabilities are rows of a softmax.
    let p = trainer::probabilities(&m, &d, &test[..5], 1.0).unwrap();
    for row in p.chunks(NUM_CLASSES) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let d = build_dataset(1, 15).unwrap();
    let m = Architecture::ResnetMini.build(0.125, 16).unwrap();
    let empty = Dataset::with_split(d.frames().to_vec(), 0, vec![], vec![0]).unwrap();
    assert!(matches!(trainer::train(&m, &empty, &small_cfg(1)), Err(Error::Parameter(_))));
    let bad = TrainConfig {
        frozen: BTreeSet::from(["nope".to_string()]),
        ..small_cfg(1)
    };
    assert!(matches!(trainer::train(&m, &d, &bad), Err(Error::Config(_))));
    assert!(trainer::train(&m, &d, &TrainConfig { batch_size: 0, ..small_cfg(1) }).is_err());
}
