use fdd_autodiff::{backward, save_fddw, load_fddw, ParamId, ParamStore, Tensor};
use fdd_core::clstm::*;
use fdd_core::dataset::{synthesize_burst, ConditionClass, SynthParams};
use fdd_core::features::{FeatureConfig, FeatureExtractor, FeatureTensor, TensorStandardizer};
use fdd_core::seeded;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn tensor(id: u64, rows: usize, t: usize, values: Vec<f64>) -> FeatureTensor {
    FeatureTensor { burst_id: id, channels: rows, timesteps: t, values }
}

fn random_tensors(n: usize, rows: usize, t: usize, seed: u64) -> Vec<FeatureTensor> {
    let mut rng = seeded(seed);
    (0..n).map(|i| tensor(i as u64, rows, t, (0..rows * t).map(|_| rng.sample(StandardNormal)).collect())).collect()
}

/// Small architecture for 3 × 32 inputs.
fn small_config(seed: u64) -> ClstmConfig {
    ClstmConfig {
        path1_filters: 4,
        path1_width: 5,
        lstm_hidden: 5,
        blocks: vec![ConvBlock { filters: 4, width: 5, pool: 2 }, ConvBlock { filters: 6, width: 3, pool: 2 }],
        dense: 7,
        seed,
        training: ClstmTraining { epochs: 50, batch_size: 8, ..ClstmTraining::default() },
        ..ClstmConfig::default()
    }
}

fn frozen(cfg: &ClstmConfig, rows: usize, t: usize) -> ClstmModel {
    let mut m = ClstmModel::new(cfg, rows, t).unwrap();
    // non-trivial running statistics
    for (i, r) in m.running.iter_mut().enumerate() {
        for (j, (mu, var)) in r.mean.iter_mut().zip(r.var.iter_mut()).enumerate() {
            *mu = 0.1 * (i + j) as f64;
            *var = 1.0 + 0.05 * j as f64;
        }
    }
    m.frozen = true;
    m
}

#[test]
fn default_geometry() {
    let cfg = ClstmConfig::default();
    assert_eq!(cfg.feature_dim(), 128);
    assert_eq!(cfg.path2_lengths(256).unwrap(), vec![(248, 62), (54, 13), (5, 1)]);
    let m = ClstmModel::new(&cfg, 33, 256).unwrap();
    assert_eq!(m.feature_dim(), 128);
    assert!(matches!(cfg.path2_lengths(64), Err(ClstmError::Config(_))));
    assert!(matches!(ClstmModel::new(&cfg, 33, 64), Err(ClstmError::Config(_))));
    assert!(matches!(
        ClstmModel::new(&ClstmConfig { dense: 0, ..cfg.clone() }, 33, 256),
        Err(ClstmError::Config(_))
    ));
}

#[test]
fn eval_features_ignore_batch_companions() {
    let cfg = small_config(1);
    let m = frozen(&cfg, 3, 32);
    let ts = random_tensors(32, 3, 32, 2);
    let all = extract_features(&m, &ts).unwrap();
    assert_eq!(all.len(), 32);
    assert!(all.iter().all(|r| r.len() == 12));
    for (i, t) in ts.iter().enumerate() {
        let alone = m.features_batch(&[t]).unwrap();
        let dev = alone[0].iter().zip(&all[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "sample {i}: {dev}");
    }
    // duplicates inside one batch give identical rows
    let pair = m.features_batch(&[&ts[3], &ts[3]]).unwrap();
    assert_eq!(pair[0], pair[1]);
    assert_eq!(extract_features(&m, &ts).unwrap(), all);
}

#[test]
fn zero_tensor_gives_finite_features() {
    let m = frozen(&ClstmConfig::default(), 33, 256);
    let f = extract_features(&m, &[tensor(0, 33, 256, vec![0.0; 33 * 256])]).unwrap();
    assert_eq!(f[0].len(), 128);
    assert!(f[0].iter().all(|v| v.is_finite()));
}

#[test]
fn unfrozen_model_is_rejected() {
    let m = ClstmModel::new(&small_config(0), 3, 32).unwrap();
    assert!(matches!(extract_features(&m, &random_tensors(2, 3, 32, 0)), Err(ClstmError::NotFrozen)));
}

#[test]
fn shape_mismatch_is_rejected() {
    let m = frozen(&small_config(0), 3, 32);
    assert!(matches!(extract_features(&m, &random_tensors(2, 4, 32, 0)), Err(ClstmError::Shape(_))));
    assert!(matches!(extract_features(&m, &random_tensors(2, 3, 31, 0)), Err(ClstmError::Shape(_))));
}

#[test]
fn cross_entropy_matches_direct_formula() {
    let logits = Tensor::new(vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0], &[2, 3]);
    let (loss, correct) = weighted_cross_entropy(&logits, &[1, 0], &[0.25, 1.0]);
    let nll = |row: &[f64], y: usize| {
        let s: f64 = row.iter().map(|v| v.exp()).sum();
        -(row[y].exp() / s).ln()
    };
    let expected = (0.25 * nll(&[1.0, 2.0, 0.5], 1) + nll(&[-1.0, 0.0, 3.0], 0)) / 1.25;
    assert!((loss.item() - expected).abs() < 1e-12);
    assert_eq!(correct, 1);
    // huge logits stay finite
    let (loss, _) = weighted_cross_entropy(&Tensor::new(vec![1000.0, -1000.0], &[1, 2]), &[0], &[1.0]);
    assert!(loss.item().abs() < 1e-12);
}

fn numeric_grad(store: &ParamStore, f: &dyn Fn(&ParamStore) -> f64, h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..store.len() {
        for i in 0..store.get(ParamId(k)).values.len() {
            let mut s = store.clone();
            s.get_mut(ParamId(k)).values[i] += h;
            let up = f(&s);
            s.get_mut(ParamId(k)).values[i] -= 2.0 * h;
            out.push((up - f(&s)) / (2.0 * h));
        }
    }
    out
}

#[test]
fn trunk_gradient_matches_finite_differences() {
    let cfg = ClstmConfig {
        path1_filters: 2,
        path1_width: 3,
        lstm_hidden: 2,
        blocks: vec![ConvBlock { filters: 2, width: 3, pool: 2 }],
        dense: 3,
        ..ClstmConfig::default()
    };
    let m = ClstmModel::new(&cfg, 2, 10).unwrap();
    let head = SoftmaxHead::new(5, 3, 4);
    let ts = random_tensors(4, 2, 10, 5);
    let refs: Vec<&FeatureTensor> = ts.iter().collect();
    let x = m.batch(&refs).unwrap();
    let labels = [0, 2, 1, 2];
    let weights = [1.0, 0.5, 1.0, 0.5];
    let loss_of = |p: &ParamStore| {
        let mut running = m.running.clone();
        let f = m.forward(&p.bind(), &x, BatchStats::Train(&mut running)).unwrap();
        let logits = head.logits(&head.params.bind_frozen(), &f).unwrap();
        weighted_cross_entropy(&logits, &labels, &weights).0
    };
    let b = m.params.bind();
    let mut running = m.running.clone();
    let f = m.forward(&b, &x, BatchStats::Train(&mut running)).unwrap();
    let logits = head.logits(&head.params.bind_frozen(), &f).unwrap();
    let loss = weighted_cross_entropy(&logits, &labels, &weights).0;
    let analytic: Vec<f64> = backward(&loss, &b.leaves(), false).unwrap().iter().flat_map(|g| g.to_vec()).collect();
    let numeric = numeric_grad(&m.params, &|p| loss_of(p).item(), 1e-6);
    let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let norm = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    assert!(diff / norm < 1e-6, "relative error {}", diff / norm);
}

/// Two classes whose tensors carry opposite-signed ramps plus noise.
fn separable(n: usize, seed: u64) -> (Vec<FeatureTensor>, Vec<usize>) {
    let mut rng = seeded(seed);
    let mut ts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 0 { 1.0 } else { -1.0 };
        let values = (0..3 * 32)
            .map(|j| sign * ((j % 32) as f64 / 16.0 - 1.0) + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        ts.push(tensor(i as u64, 3, 32, values));
        labels.push(y);
    }
    (ts, labels)
}

#[test]
fn separable_toy_is_fitted() {
    let (ts, labels) = separable(40, 6);
    let out = train_clstm(LabeledTensors::new(&ts, &labels), None, 2, &small_config(7)).unwrap();
    assert!(out.model.frozen);
    assert_eq!(out.curves.epochs.len(), 50);
    let best = out.curves.epochs.iter().map(|e| e.train_accuracy).fold(0.0, f64::max);
    assert_eq!(best, 1.0);
    // the frozen trunk with its head also separates the data
    let probs = out.head.probabilities(&extract_features(&out.model, &ts).unwrap()).unwrap();
    let acc = probs.iter().zip(&labels).filter(|(p, &y)| p[y] > 0.5).count();
    assert_eq!(acc, 40);
}

#[test]
fn training_is_deterministic() {
    let (ts, labels) = separable(12, 8);
    let cfg = ClstmConfig { training: ClstmTraining { epochs: 3, batch_size: 4, ..ClstmTraining::default() }, ..small_config(9) };
    let a = train_clstm(LabeledTensors::new(&ts, &labels), None, 2, &cfg).unwrap();
    let b = train_clstm(LabeledTensors::new(&ts, &labels), None, 2, &cfg).unwrap();
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(a.model.running, b.model.running);
    assert_eq!(a.head, b.head);
    assert_eq!(a.curves, b.curves);
    let c = train_clstm(LabeledTensors::new(&ts, &labels), None, 2, &ClstmConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.model.params, c.model.params);
}

#[test]
fn validation_curve_is_reported() {
    let (ts, labels) = separable(16, 11);
    let (vt, vl) = separable(6, 12);
    let cfg = ClstmConfig { training: ClstmTraining { epochs: 2, batch_size: 5, ..ClstmTraining::default() }, ..small_config(13) };
    let out = train_clstm(LabeledTensors::new(&ts, &labels), Some(LabeledTensors::new(&vt, &vl)), 2, &cfg).unwrap();
    assert!(out.curves.epochs.iter().all(|e| e.val_loss.is_some_and(f64::is_finite) && e.val_accuracy.is_some()));
    let mut buf = Vec::new();
    out.curves.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
}

#[test]
fn invalid_training_inputs() {
    let (ts, labels) = separable(6, 14);
    let cfg = small_config(0);
    let run = |l: &[usize], k: usize| train_clstm(LabeledTensors::new(&ts, l), None, k, &cfg);
    assert!(matches!(run(&labels[..5], 2), Err(ClstmError::Shape(_))));
    assert!(matches!(run(&[0, 1, 2, 0, 1, 0], 2), Err(ClstmError::Label { label: 2, classes: 2 })));
    assert!(matches!(run(&labels, 1), Err(ClstmError::Config(_))));
    assert!(matches!(train_clstm(LabeledTensors::new(&[], &[]), None, 2, &cfg), Err(ClstmError::Empty)));
}

#[test]
fn checkpoint_roundtrip() {
    let (ts, labels) = separable(10, 15);
    let cfg = ClstmConfig { training: ClstmTraining { epochs: 2, batch_size: 5, ..ClstmTraining::default() }, ..small_config(16) };
    let out = train_clstm(LabeledTensors::new(&ts, &labels), None, 2, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clstm.fddw");
    save_fddw(&path, &out.model.to_named()).unwrap();
    let restored = ClstmModel::from_named(&cfg, &load_fddw(&path).unwrap()).unwrap();
    assert!(restored.frozen);
    assert_eq!(restored.running, out.model.running);
    assert_eq!(extract_features(&restored, &ts).unwrap(), extract_features(&out.model, &ts).unwrap());
    let mut partial = out.model.to_named();
    partial.retain(|t| !t.name.ends_with("running_var"));
    assert!(ClstmModel::from_named(&cfg, &partial).is_err());
}

/// Standardized tensors of synthesized bursts at the default feature size.
fn synthetic_tensors(per_class: usize, seed: u64) -> (Vec<FeatureTensor>, Vec<usize>) {
    let params = SynthParams::default();
    let mut rng = seeded(seed);
    let mut bursts = Vec::new();
    let mut labels = Vec::new();
    for class in ConditionClass::ALL {
        for _ in 0..per_class {
            bursts.push(synthesize_burst(class, &params, &mut rng).unwrap());
            labels.push(class.index());
        }
    }
    let fx = FeatureExtractor::new(FeatureConfig::default(), params.sample_rate, params.burst_len).unwrap();
    let ts = fx.tensors(&bursts).unwrap();
    let scaler = TensorStandardizer::fit(&ts).unwrap();
    (scaler.apply_all(&ts).unwrap(), labels)
}

#[test]
fn default_config_does_not_diverge() {
    let (ts, labels) = synthetic_tensors(6, 17);
    let mut passes = 0;
    for seed in 0..10 {
        let cfg = ClstmConfig {
            seed,
            training: ClstmTraining { epochs: 4, ..ClstmTraining::default() },
            ..ClstmConfig::default()
        };
        let out = train_clstm(LabeledTensors::new(&ts, &labels), None, 6, &cfg).unwrap();
        let e = &out.curves.epochs;
        if e[1..].iter().all(|x| x.train_loss <= e[0].train_loss) {
            passes += 1;
        }
    }
    assert!(passes >= 9, "{passes}/10 seeds kept the loss at or below its first epoch");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn feature_dim_is_hidden_plus_dense(hidden in 1usize..6, dense in 1usize..6, f1 in 1usize..4, rows in 1usize..4) {
        let cfg = ClstmConfig {
            path1_filters: f1,
            path1_width: 3,
            lstm_hidden: hidden,
            blocks: vec![ConvBlock { filters: 2, width: 3, pool: 2 }],
            dense,
            ..ClstmConfig::default()
        };
        let m = frozen(&cfg, rows, 12);
        let f = extract_features(&m, &random_tensors(2, rows, 12, 0)).unwrap();
        prop_assert!(f.iter().all(|r| r.len() == hidden + dense));
    }

    #[test]
    fn eval_is_batch_invariant(seed in 0u64..1000, pick in 0usize..6) {
        let m = frozen(&small_config(seed), 3, 32);
        let ts = random_tensors(6, 3, 32, seed);
        let all = extract_features(&m, &ts).unwrap();
        let alone = m.features_batch(&[&ts[pick]]).unwrap();
        let dev = alone[0].iter().zip(&all[pick]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(dev < 1e-10);
    }
}
