mod common;

use common::*;
use esmos_core::densemos::*;
use esmos_core::exec::Execution;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn small_shape() -> ModelShape {
    ModelShape { n_layers: 13, dim: 10, hidden: 6 }
}

fn synthetic(n: usize, seed: u64, shape: ModelShape) -> Vec<Sample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| Sample {
            stimulus_id: format!("s{i:03}"),
            embedding: random_embedding(shape.n_layers, shape.dim, &mut r),
            label: r.gen_range(1.0..5.0),
        })
        .collect()
}

#[test]
fn every_gradient_of_a_small_network_matches_finite_differences() {
    let shape = small_shape();
    let mut r = rng(100);
    let mut worst = GradCheck::default();
    for _ in 0..20 {
        let p = random_params(shape, &mut r);
        let embs: Vec<_> = (0..3).map(|_| random_embedding(shape.n_layers, shape.dim, &mut r)).collect();
        let batch: Vec<_> = embs.iter().map(|e| (e, r.gen_range(1.0..5.0))).collect();
        let masks: Vec<_> = (0..3).map(|_| DropoutMasks::sample(shape.hidden, 0.3, &mut r)).collect();
        let coords: Vec<usize> = (0..p.len()).collect();
        let c = check_gradients(&p, &batch, &masks, &coords);
        worst.checked += c.checked;
        worst.kinks += c.kinks;
        worst.max_rel = worst.max_rel.max(c.max_rel);
    }
    assert!(worst.max_rel <= 1e-4, "{worst:?}");
    assert!(worst.kinks * 100 < worst.checked, "{worst:?}");
}

#[test]
fn full_size_gradients_on_sampled_coordinates() {
    let shape = ModelShape::default();
    let mut r = rng(7);
    let p = random_params(shape, &mut r);
    let embs: Vec<_> = (0..2).map(|_| random_embedding(13, 768, &mut r)).collect();
    let batch: Vec<_> = embs.iter().map(|e| (e, r.gen_range(1.0..5.0))).collect();
    let masks: Vec<_> = (0..2).map(|_| DropoutMasks::sample(128, 0.6, &mut r)).collect();
    // α, every bias, the output layer, and 64 random entries of each weight matrix
    let mut coords: Vec<usize> = (0..13).collect();
    let w1 = 13..13 + 768 * 128;
    let b1 = w1.end..w1.end + 128;
    let w2 = b1.end..b1.end + 128 * 128;
    let rest = w2.end..p.len();
    coords.extend(b1);
    coords.extend(rest);
    coords.extend((0..64).map(|_| r.gen_range(w1.clone())));
    coords.extend((0..64).map(|_| r.gen_range(w2.clone())));
    let c = check_gradients(&p, &batch, &masks, &coords);
    assert!(c.max_rel <= 1e-4, "{c:?}");
}

#[test]
fn fusion_properties() {
    let mut r = rng(3);
    let e = random_embedding(13, 768, &mut r);
    for layer in 0..13 {
        let mut a = [0.0; 13];
        a[layer] = r.gen_range(0.1..3.0);
        let f = weighted_layer_average(&e, &a).unwrap();
        assert!(f.iter().zip(e.layer(layer)).all(|(x, &y)| (x - f64::from(y)).abs() <= 1e-12));
    }
    let mean = weighted_layer_average(&e, &[0.7; 13]).unwrap();
    for (d, got) in mean.iter().enumerate() {
        let m: f64 = (0..13).map(|l| f64::from(e.layer(l)[d])).sum::<f64>() / 13.0;
        assert!((got - m).abs() <= 1e-12);
    }
    for _ in 0..20 {
        let a: Vec<f64> = (0..13).map(|_| r.gen_range(-2.0..2.0)).collect();
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let f = weighted_layer_average(&e, &a).unwrap();
        let g = weighted_layer_average(&e, &neg).unwrap();
        assert!(f.iter().zip(&g).all(|(x, y)| (x - y).abs() <= 1e-12));
        for (d, &fd) in f.iter().enumerate() {
            let col = (0..13).map(|l| f64::from(e.layer(l)[d]));
            let lo = col.clone().fold(f64::INFINITY, f64::min);
            let hi = col.fold(f64::NEG_INFINITY, f64::max);
            assert!(fd >= lo - 1e-12 && fd <= hi + 1e-12);
        }
    }
}

#[test]
fn initial_fusion_is_layer_mean() {
    let p = ModelParams::init(ModelShape::default(), 9).unwrap();
    let e = random_embedding(13, 768, &mut rng(1));
    let f = weighted_layer_average(&e, p.alphas()).unwrap();
    let m = weighted_layer_average(&e, &[1.0; 13]).unwrap();
    assert!(f.iter().zip(&m).all(|(a, b)| (a - b).abs() < 1e-15));
}

#[test]
fn overfits_small_set_and_is_deterministic() {
    let data = synthetic(32, 42, ModelShape::default());
    let config = TrainConfig { max_epochs: 2000, seed: 7, ..TrainConfig::default() };
    let a = train(&data, &data, &config, Execution::Parallel).unwrap();
    let mse = a.history[a.best_epoch].val_loss;
    assert!(mse < 0.01, "best eval MSE {mse}");

    let b = train(&data, &data, &config, Execution::Sequential).unwrap();
    assert_eq!(a, b);

    let eval = evaluate(&a.params, &data, &EvalOptions { n_boot: 0, ..Default::default() }, Execution::Parallel)
        .unwrap();
    assert!(eval.metrics.mae < 0.1, "{:?}", eval.metrics);
    assert_eq!(eval.predictions.len(), 32);
}

#[test]
fn training_ignores_input_order() {
    let shape = small_shape();
    let data = synthetic(20, 5, shape);
    let config = TrainConfig { max_epochs: 30, hidden: shape.hidden, batch_size: 4, seed: 1, ..TrainConfig::default() };
    let a = train(&data, &data[..5], &config, Execution::Sequential).unwrap();
    let mut shuffled = data.clone();
    shuffled.shuffle(&mut rng(77));
    let b = train(&shuffled, &data[..5], &config, Execution::Sequential).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn early_stopping_counts_patience_from_best_epoch() {
    let shape = small_shape();
    let data = synthetic(8, 2, shape);
    // learning rates too small to move any f64 parameter: val loss is flat,
    // so epoch 0 stays best
    let config = TrainConfig {
        lr_alpha: 1e-300,
        lr_mlp: 1e-300,
        patience: 5,
        max_epochs: 100,
        hidden: shape.hidden,
        ..TrainConfig::default()
    };
    let c = train(&data, &data, &config, Execution::Sequential).unwrap();
    assert_eq!(c.best_epoch, 0);
    assert_eq!(c.history.len(), 6);
}

#[test]
fn checkpoint_round_trip_preserves_metrics() {
    let shape = small_shape();
    let data = synthetic(24, 8, shape);
    let config = TrainConfig { max_epochs: 20, hidden: shape.hidden, batch_size: 8, ..TrainConfig::default() };
    let ckpt = train(&data[..16], &data[16..], &config, Execution::Sequential).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.dmos");
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    let opts = EvalOptions { n_boot: 200, level: 0.95, seed: 3 };
    let before = evaluate(&ckpt.params, &data[16..], &opts, Execution::Sequential).unwrap();
    let after = evaluate(&back.params, &data[16..], &opts, Execution::Parallel).unwrap();
    assert_eq!(before, after);

    let preds = dir.path().join("pred.jsonl");
    write_predictions(&preds, &after.predictions).unwrap();
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 8);
}

#[test]
fn missing_embedding_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let e = random_embedding(13, 768, &mut rng(0));
    write_embedding(&dir.path().join("a.emb1"), &e).unwrap();
    let labels = vec![("a".to_string(), 3.0), ("b".to_string(), 2.0)];
    let err = load_samples(&labels, dir.path(), Execution::Sequential).unwrap_err();
    assert!(matches!(err, DenseMosError::MissingEmbedding { ref id, .. } if id == "b"));
    let ok = load_samples(&labels[..1], dir.path(), Execution::Sequential).unwrap();
    assert_eq!(ok[0].embedding, e);
}

#[test]
fn empty_sets_rejected() {
    let data = synthetic(4, 0, small_shape());
    let config = TrainConfig { hidden: 6, ..TrainConfig::default() };
    assert!(matches!(train(&[], &data, &config, Execution::Sequential), Err(DenseMosError::EmptySet(_))));
    assert!(matches!(train(&data, &[], &config, Execution::Sequential), Err(DenseMosError::EmptySet(_))));
    let p = ModelParams::init(small_shape(), 0).unwrap();
    assert!(evaluate(&p, &[], &EvalOptions::default(), Execution::Sequential).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_stay_inside_mos_range(seed in any::<u64>(), scale in 0.0f64..50.0) {
        let shape = small_shape();
        let mut r = rng(seed);
        let mut p = random_params(shape, &mut r);
        for v in p.values_mut().iter_mut().skip(13) {
            *v *= scale;
        }
        let e = LayerEmbeddings::from_fn(13, 10, |_, _| r.gen_range(-100.0..100.0)).unwrap();
        let c = forward(&p, &e, Mode::Eval).unwrap();
        prop_assert!(c.prediction() > 1.0 && c.prediction() < 5.0);
        let c2 = forward(&p, &e, Mode::Eval).unwrap();
        prop_assert_eq!(c.prediction(), c2.prediction());
    }
}
