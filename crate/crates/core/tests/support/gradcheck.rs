//! Finite-difference checks of every layer's backward pass, in f64. Each
//! check returns the worst relative error over its random cases.

use fringe_core::neural::layers::*;
use fringe_core::neural::{build_model, loss, loss_and_grad, ModelSpec, Params, Tensor, TrainSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: usize = 50;
const H: f64 = 1e-6;

fn rand_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor<f64> {
    Tensor::from_vec(h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Checks `d<r, f(x)>/dx_i` at a random coordinate against central differences.
fn check_input_grad(
    rng: &mut ChaCha8Rng,
    x: &Tensor<f64>,
    f: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    backward: impl Fn(&Tensor<f64>) -> Tensor<f64>,
) -> f64 {
    let y = f(x);
    let r = rand_tensor(rng, y.h, y.w, y.c);
    let dx = backward(&r);
    let i = rng.random_range(0..x.data.len());
    let mut xp = x.clone();
    xp.data[i] += H;
    let mut xm = x.clone();
    xm.data[i] -= H;
    let numeric = (dot(&r, &f(&xp)) - dot(&r, &f(&xm))) / (2.0 * H);
    rel_err(dx.data[i], numeric)
}

pub fn conv() -> f64 {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..CASES {
        let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
        let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
        let x = rand_tensor(&mut rng, h, w, cin);
        let wt: Vec<f64> = (0..9 * cin * cout).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut scratch = Vec::new();
        let y = conv3x3(&x, &wt, &b, &mut scratch);
        let r = rand_tensor(&mut rng, h, w, cout);
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; cout];
        let dx = conv3x3_backward(&x, &wt, &r, &mut dw, &mut db, true, &mut scratch).unwrap();
        assert_eq!(y.shape(), (h, w, cout));
        let obj = |x: &Tensor<f64>, wt: &[f64], b: &[f64]| dot(&r, &conv3x3(x, wt, b, &mut Vec::new()));

        let i = rng.random_range(0..x.data.len());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data[i] += H;
        xm.data[i] -= H;
        let num = (obj(&xp, &wt, &b) - obj(&xm, &wt, &b)) / (2.0 * H);
        worst = worst.max(rel_err(dx.data[i], num));

        let j = rng.random_range(0..wt.len());
        let (mut wp, mut wm) = (wt.clone(), wt.clone());
        wp[j] += H;
        wm[j] -= H;
        let num = (obj(&x, &wp, &b) - obj(&x, &wm, &b)) / (2.0 * H);
        worst = worst.max(rel_err(dw[j], num));

        let k = rng.random_range(0..cout);
        let (mut bp, mut bm) = (b.clone(), b.clone());
        bp[k] += H;
        bm[k] -= H;
        let num = (obj(&x, &wt, &bp) - obj(&x, &wt, &bm)) / (2.0 * H);
        worst = worst.max(rel_err(db[k], num));
    }
    worst
}

pub fn relu_layer() -> f64 {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..CASES {
        let mut x = rand_tensor(&mut rng, 3, 4, 2);
        // keep away from the kink
        x.data.iter_mut().filter(|v| v.abs() < 1e-3).for_each(|v| *v = 0.5);
        let y = relu(&x);
        worst = worst.max(check_input_grad(&mut rng, &x, relu, |r| relu_backward(&y, r)));
    }
    worst
}

/// Worst errors of (max-pool, upsample).
pub fn pool_and_upsample() -> (f64, f64) {
    let (mut pool, mut up): (f64, f64) = (0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..CASES {
        let s = [2, 4][rng.random_range(0..2)];
        let c = rng.random_range(1..3);
        let x = rand_tensor(&mut rng, 2 * s, 3 * s, c);
        let (_, arg) = max_pool(&x, s);
        pool = pool.max(check_input_grad(&mut rng, &x, |x| max_pool(x, s).0, |r| max_pool_backward(r, &arg, x.h, x.w)));

        let small = rand_tensor(&mut rng, 2, 3, c);
        up = up.max(check_input_grad(&mut rng, &small, |x| upsample(x, s), |r| upsample_backward(r, s)));
    }
    (pool, up)
}

/// Worst errors of (residual add, concat, masked MSE).
pub fn add_concat_and_loss() -> (f64, f64, f64) {
    let (mut add_e, mut cat_e, mut mse_e): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..CASES {
        let a = rand_tensor(&mut rng, 3, 2, 2);
        let b = rand_tensor(&mut rng, 3, 2, 2);
        add_e = add_e.max(check_input_grad(&mut rng, &a, |x| add(x, &b), |r| r.clone()));

        let c3 = rand_tensor(&mut rng, 3, 2, 3);
        let e = check_input_grad(
            &mut rng,
            &c3,
            |x| concat(&[&a, x]),
            |r| concat_backward(r, &[2, 3]).pop().unwrap(),
        );
        cat_e = cat_e.max(e);

        let target = rand_tensor(&mut rng, 3, 2, 2);
        let mask: Vec<bool> = (0..6).map(|_| rng.random_bool(0.7)).collect();
        let (_, g) = masked_mse(&a, &target, &mask, 5.0);
        let i = rng.random_range(0..a.data.len());
        let (mut ap, mut am) = (a.clone(), a.clone());
        ap.data[i] += H;
        am.data[i] -= H;
        let num = (masked_mse(&ap, &target, &mask, 5.0).0 - masked_mse(&am, &target, &mask, 5.0).0) / (2.0 * H);
        mse_e = mse_e.max(rel_err(g.data[i], num));
    }
    (add_e, cat_e, mse_e)
}

/// Parameter gradients of whole networks (three small layouts).
pub fn network() -> f64 {
    let mut worst: f64 = 0.0;
    for (b, f) in [(0, vec![1]), (1, vec![2]), (2, vec![1, 2, 4, 8])] {
        worst = worst.max(network_check(ModelSpec {
            input_channels: 2,
            output_channels: 2,
            filters: 3,
            blocks_per_path: b,
            factors: f,
        }));
    }
    worst
}

fn network_check(spec: ModelSpec) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut params: Params<f64> = build_model(&spec, 3).unwrap();
    // zero biases put every all-dead neighbourhood exactly on a ReLU kink
    for c in params.convs.iter_mut() {
        c.bias.iter_mut().for_each(|b| *b = rng.random_range(0.05..0.3));
    }
    let sample = TrainSample {
        input: rand_tensor(&mut rng, 8, 16, 2),
        target: rand_tensor(&mut rng, 8, 16, 2),
        mask: (0..128).map(|_| rng.random_bool(0.8)).collect(),
    };
    let batch = [sample];
    let (_, grads) = loss_and_grad(&params, &batch).unwrap();
    let sizes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..CASES {
        let t = rng.random_range(0..sizes.len());
        let i = rng.random_range(0..sizes[t]);
        let mut p = params.clone();
        p.slices_mut()[t][i] += H;
        let lp = loss(&p, &batch).unwrap();
        p.slices_mut()[t][i] -= 2.0 * H;
        let lm = loss(&p, &batch).unwrap();
        let num = (lp - lm) / (2.0 * H);
        let ana = grads.slices()[t][i];
        worst = worst.max(rel_err(ana, num));
    }
    worst
}
