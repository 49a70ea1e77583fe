use elical_core::probe::{
    fit_stage1, gradient_check, predict, run_mode, train_stage, FeatureStats, HeadKind, Mode, ProbeParams,
    TrainConfig, TrainingPool,
};
use elical_core::metrics::auroc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let xs = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ys = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    (xs, ys)
}

fn perturbed(head: HeadKind, xs: &[Vec<f64>], rng: &mut ChaCha8Rng) -> ProbeParams<f64> {
    let mut p = ProbeParams::fresh(head, FeatureStats::fit(xs).unwrap(), rng.random());
    let flat: Vec<f64> = p.to_flat().iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    p.set_flat(&flat);
    p
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (xs, ys) = random_batch(&mut rng, 8, 16);
        let p = perturbed(HeadKind::Linear, &xs, &mut rng);
        let err = gradient_check(&p, &xs, &ys);
        assert!(err <= 1e-6, "linear {err}");
        let p = perturbed(HeadKind::Mlp { width: 8 }, &xs, &mut rng);
        let err = gradient_check(&p, &xs, &ys);
        assert!(err <= 1e-5, "mlp {err}");
    }
}

fn pool(seed: u64, n: usize, d: usize) -> TrainingPool<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut p = TrainingPool {
        ids: Vec::new(),
        features: Vec::new(),
        self_consistency: Vec::new(),
        accuracy: Vec::new(),
    };
    for i in 0..n {
        let z: f64 = rng.random_range(-3.0..3.0);
        let h: Vec<f64> = dir.iter().map(|u| u * z + rng.random_range(-0.1..0.1) + 5.0).collect();
        let c = 1.0 / (1.0 + (-z).exp());
        p.ids.push(format!("q{i:04}"));
        p.features.push(h);
        p.self_consistency.push(c);
        p.accuracy.push((i % 2 == 0).then_some(c));
    }
    p
}

#[test]
fn identical_inputs_give_identical_parameters() {
    let p = pool(1, 300, 6);
    let cfg = TrainConfig { epochs: 10, seed: 3, ..TrainConfig::default() };
    for mode in Mode::ALL {
        let a = run_mode(mode, &p, 50, &cfg, None).unwrap();
        let b = run_mode(mode, &p, 50, &cfg, None).unwrap();
        assert_eq!(a, b, "{}", mode.name());
    }
    let other = run_mode(Mode::Elical, &p, 50, &TrainConfig { seed: 4, ..cfg.clone() }, None).unwrap();
    assert_ne!(other.params, run_mode(Mode::Elical, &p, 50, &cfg, None).unwrap().params);
}

#[test]
fn affine_feature_rescaling_leaves_predictions_unchanged() {
    let p = pool(2, 200, 5);
    let cfg = TrainConfig { epochs: 8, ..TrainConfig::default() };
    let scale = [3.0, 0.5, 10.0, 2.0, 0.25];
    let shift = [-4.0, 7.0, 0.5, 100.0, -1.0];
    let map = |h: &Vec<f64>| -> Vec<f64> { h.iter().enumerate().map(|(j, v)| v * scale[j] + shift[j]).collect() };
    let q = TrainingPool {
        features: p.features.iter().map(map).collect(),
        ..p.clone()
    };
    let a = run_mode(Mode::Elical, &p, 60, &cfg, None).unwrap();
    let b = run_mode(Mode::Elical, &q, 60, &cfg, None).unwrap();
    for (h, g) in p.features.iter().zip(&q.features) {
        let (ra, _) = predict(&a.params, h).unwrap();
        let (rb, _) = predict(&b.params, g).unwrap();
        assert!((ra - rb).abs() < 1e-9, "{ra} vs {rb}");
    }
}

#[test]
fn warm_start_lineage_reproduces_stage_one() {
    let p = pool(3, 200, 4);
    let cfg = TrainConfig { epochs: 6, ..TrainConfig::default() };
    let eli = run_mode(Mode::EliOnly, &p, 0, &cfg, None).unwrap();
    let elical = run_mode(Mode::Elical, &p, 40, &cfg, None).unwrap();
    let stage1_id = eli.params.checkpoint_id();
    assert_eq!(eli.stage_lineage.stage1.as_deref(), Some(stage1_id.as_str()));
    assert_eq!(elical.stage_lineage.stage1.as_deref(), Some(stage1_id.as_str()));
    // Zero epochs of Stage 2 returns its initialization: the Stage-1 parameters.
    let s1 = fit_stage1(&p, &cfg).unwrap();
    let feats: Vec<Vec<f64>> = p.features[..40].to_vec();
    let ys: Vec<f64> = p.self_consistency[..40].to_vec();
    let zero = train_stage(&s1.params, &feats, &ys, &TrainConfig { epochs: 0, ..cfg }).unwrap();
    assert_eq!(zero.params, eli.params);
    assert_eq!(zero.params.checkpoint_id(), stage1_id);
    assert_eq!(zero.history.len(), 1);
}

#[test]
fn clamping_preserves_auroc_inside_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut probe = ProbeParams::<f64>::constant(3, 0.5);
    probe.w = vec![0.05, -0.03, 0.02];
    let xs: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels: Vec<u8> = (0..200).map(|i| u8::from(i % 3 != 0)).collect();
    let (raw, conf): (Vec<f64>, Vec<f64>) = xs.iter().map(|h| predict(&probe, h).unwrap()).unzip();
    assert!(raw.iter().all(|r| (0.0..=1.0).contains(r)));
    assert_eq!(auroc(&raw, &labels).unwrap(), auroc(&conf, &labels).unwrap());
}

#[test]
fn single_precision_trains_too() {
    let p = pool(4, 120, 3);
    let p32 = TrainingPool::<f32> {
        ids: p.ids.clone(),
        features: p.features.iter().map(|h| h.iter().map(|&v| v as f32).collect()).collect(),
        self_consistency: p.self_consistency.iter().map(|&v| v as f32).collect(),
        accuracy: p.accuracy.iter().map(|a| a.map(|v| v as f32)).collect(),
    };
    let cfg = TrainConfig { epochs: 20, learning_rate: 1e-2, ..TrainConfig::default() };
    let t = run_mode(Mode::EliOnly, &p32, 0, &cfg, None).unwrap();
    let first = t.history[0].val_mse;
    let best = t.history.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
    assert!(best < first);
}
