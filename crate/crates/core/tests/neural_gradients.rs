//! Finite-difference checks of every layer's backward pass, in f64.

mod support;

use support::gradcheck;

const TOL: f64 = 1e-4;

#[test]
fn conv_gradients_match_finite_differences() {
    let e = gradcheck::conv();
    assert!(e < TOL, "{e}");
}

#[test]
fn relu_gradients_match_finite_differences() {
    let e = gradcheck::relu_layer();
    assert!(e < TOL, "{e}");
}

#[test]
fn pool_and_upsample_gradients_match_finite_differences() {
    let (pool, up) = gradcheck::pool_and_upsample();
    assert!(pool < TOL, "pool {pool}");
    assert!(up < TOL, "upsample {up}");
}

#[test]
fn add_concat_and_loss_gradients_match_finite_differences() {
    let (add, cat, mse) = gradcheck::add_concat_and_loss();
    assert!(add < TOL, "add {add}");
    assert!(cat < TOL, "concat {cat}");
    assert!(mse < TOL, "mse {mse}");
}

#[test]
fn whole_network_gradient_matches_finite_differences() {
    let e = gradcheck::network();
    assert!(e < TOL, "{e}");
}
