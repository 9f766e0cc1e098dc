use fringe_core::neural::{
    adam_step, build_model, forward, infer_cnn2, load_weights, loss, save_weights, train, AdamConfig, AdamState,
    ModelSpec, NeuralError, Params, Tape, Tensor, TrainConfig, TrainSample,
};
use fringe_core::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_spec(cin: usize, cout: usize, filters: usize) -> ModelSpec {
    ModelSpec {
        input_channels: cin,
        output_channels: cout,
        filters,
        blocks_per_path: 1,
        factors: vec![1, 2, 4, 8],
    }
}

fn random_tensor(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn layer(params: &Params<f64>, name: &str) -> usize {
    params.convs.iter().position(|c| c.name == name).unwrap()
}

#[test]
fn adam_first_step_matches_hand_evaluation() {
    let spec = small_spec(1, 1, 2);
    let mut params = Params::<f64>::zeros(&spec);
    let mut grads = Params::<f64>::zeros(&spec);
    grads.slices_mut().into_iter().for_each(|s| s.fill(1.0));
    let cfg = AdamConfig { lr: 1e-3, ..Default::default() };
    let mut state = AdamState::new(&params, cfg);
    adam_step(&mut params, &grads, &mut state).unwrap();
    // m̂ = v̂ = 1 after bias correction at t = 1
    let expected = -1e-3 / (1.0 + 1e-8);
    for s in params.slices() {
        for &v in s {
            assert!((v - expected).abs() < 1e-15, "{v}");
        }
    }
    assert_eq!(state.t, 1);
}

#[test]
fn adam_zero_gradient_and_determinism() {
    let spec = small_spec(1, 2, 2);
    let start: Params<f64> = build_model(&spec, 3).unwrap();
    let zero = Params::<f64>::zeros(&spec);
    let mut p = start.clone();
    let mut state = AdamState::new(&p, AdamConfig::default());
    adam_step(&mut p, &zero, &mut state).unwrap();
    assert_eq!(p, start);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = Params::<f64>::zeros(&spec);
    g.slices_mut().into_iter().for_each(|s| s.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0)));
    let run = || {
        let mut p = start.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        p
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let spec = small_spec(1, 1, 2);
    let mut p = Params::<f64>::zeros(&spec);
    let mut g = Params::<f64>::zeros(&spec);
    g.convs[0].weight[0] = f64::INFINITY;
    let mut st = AdamState::new(&p, AdamConfig::default());
    assert!(matches!(adam_step(&mut p, &g, &mut st), Err(NeuralError::Diverged)));
    assert_eq!(st.t, 0);
}

/// A residual block with zeroed convolutions passes values and gradients
/// through unchanged.
#[test]
fn zeroed_residual_block_is_identity() {
    let spec = small_spec(3, 1, 4);
    let mut params: Params<f64> = build_model(&spec, 11).unwrap();
    let c1 = layer(&params, "path1.block1.conv1");
    let c2 = layer(&params, "path1.block1.conv2");
    for l in [c1, c2] {
        params.convs[l].weight.fill(0.0);
        params.convs[l].bias.fill(0.0);
    }
    let lin = layer(&params, "path1.in");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(8, 8, 3, &mut rng);
    let dout = random_tensor(8, 8, 4, &mut rng);

    let mut with = Tape::new();
    let i = with.input(x.clone());
    let h = with.conv(i, lin, &params);
    let a = with.conv(h, c1, &params);
    let a = with.relu(a);
    let b = with.conv(a, c2, &params);
    let b = with.relu(b);
    let out = with.add(h, b);
    assert_eq!(with.value(out), with.value(h));
    let mut g_with = Params::zeros(&spec);
    with.backward(out, dout.clone(), &params, &mut g_with);

    let mut without = Tape::new();
    let i = without.input(x);
    let h = without.conv(i, lin, &params);
    let mut g_without = Params::zeros(&spec);
    without.backward(h, dout, &params, &mut g_without);

    assert_eq!(g_with.convs[lin], g_without.convs[lin]);
}

fn constant_output_cnn2(value: f32) -> Params<f32> {
    let spec = small_spec(5, 1, 2);
    let mut p = Params::<f32>::zeros(&spec);
    p.convs.last_mut().unwrap().bias[0] = value;
    p
}

#[test]
fn cnn2_rounds_and_clamps_orders() {
    let (w, h) = (16, 8);
    let img = Grid::filled(w, h, 0.5);
    let orders = Grid::filled(w, h, 3);
    let mask = Grid::filled(w, h, true);
    let mut partial = mask.clone();
    partial.set(0, 0, false);
    let run = |v: f32, m| {
        infer_cnn2(&constant_output_cnn2(v), &img, &img, &img, &img, &orders, &mask, m, 48).unwrap()
    };
    let o = run(0.5208, &partial);
    assert_eq!(*o.k.get(1, 1), 25);
    assert!(!*o.mask.get(0, 0));
    assert!(*o.mask.get(1, 0));
    assert_eq!(*run(-0.01, &mask).k.get(3, 2), 0);
    assert_eq!(*run(1.2, &mask).k.get(3, 2), 47);
}

#[test]
fn input_of_zeros_gives_finite_reproducible_output() {
    let spec = ModelSpec::cnn1(8);
    let params: Params<f32> = build_model(&spec, 4).unwrap();
    let x = Tensor::zeros(16, 24, 1);
    let a = forward(&params, &x).unwrap();
    assert!(a.all_finite());
    assert_eq!(a, forward(&params, &x).unwrap());
    assert_eq!(a.shape(), (16, 24, 2));
}

fn toy_sample(seed: u64, h: usize, w: usize) -> TrainSample<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f32 = rng.random_range(0.0..6.0);
    let freq: f32 = rng.random_range(0.3..0.8);
    let input = Tensor::from_vec(
        h,
        w,
        1,
        (0..h * w).map(|i| 0.5 + 0.4 * ((i % w) as f32 * freq + phase).cos()).collect(),
    );
    let mut target = Tensor::zeros(h, w, 2);
    for i in 0..h * w {
        let t = (i % w) as f32 * freq + phase;
        target.data[2 * i] = -0.4 * t.sin();
        target.data[2 * i + 1] = 0.4 * t.cos();
    }
    TrainSample { input, target, mask: vec![true; h * w] }
}

#[test]
fn training_is_bit_reproducible_and_checkpoints_best() {
    let spec = small_spec(1, 2, 4);
    let train_set: Vec<_> = (0..3).map(|s| toy_sample(s, 16, 16)).collect();
    let val = vec![toy_sample(9, 16, 16)];
    let cfg = TrainConfig {
        epochs: 4,
        adam: AdamConfig { lr: 1e-3, ..Default::default() },
        ..Default::default()
    };
    let mut seen = 0;
    let a = train(&spec, &train_set, &val, &cfg, |_| seen += 1).unwrap();
    let b = train(&spec, &train_set, &val, &cfg, |_| {}).unwrap();
    assert_eq!(seen, 5);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.best, b.best);
    let best = a.curve.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(a.curve.epochs[a.best_epoch].val_loss, best);
    assert!((loss(&a.best, &val).unwrap() - best).abs() < 1e-12);

    let other = train(&spec, &train_set, &val, &TrainConfig { shuffle_seed: 8, ..cfg.clone() }, |_| {}).unwrap();
    assert_ne!(other.curve, a.curve);
}

#[test]
fn cosine_schedule_reaches_final_fraction() {
    let cfg = TrainConfig {
        epochs: 11,
        adam: AdamConfig { lr: 1e-3, ..Default::default() },
        final_lr_fraction: 0.1,
        ..Default::default()
    };
    assert!((fringe_core::neural::epoch_lr(&cfg, 1) - 1e-3).abs() < 1e-15);
    assert!((fringe_core::neural::epoch_lr(&cfg, 6) - 0.55e-3).abs() < 1e-15);
    assert!((fringe_core::neural::epoch_lr(&cfg, 11) - 1e-4).abs() < 1e-15);
}

#[test]
fn trained_weights_roundtrip_through_file() {
    let spec = small_spec(1, 2, 4);
    let set = vec![toy_sample(1, 16, 16)];
    let cfg = TrainConfig { epochs: 2, ..Default::default() };
    let out = train(&spec, &set, &[], &cfg, |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.fpnn");
    save_weights(&out.best, &path).unwrap();
    let back = load_weights(&path).unwrap();
    assert_eq!(back, out.best);
    let x = &set[0].input;
    assert_eq!(forward(&back, x).unwrap(), forward(&out.best, x).unwrap());
}

#[test]
fn empty_training_set_is_rejected() {
    let spec = small_spec(1, 2, 4);
    let r = train(&spec, &[], &[], &TrainConfig::default(), |_| {});
    assert!(r.is_err());
}
