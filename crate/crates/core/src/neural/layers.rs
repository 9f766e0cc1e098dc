//! Layer kernels and their exact backward passes.

use super::kernels::{adjoint_weights, conv_forward, conv_weight_grad};
use super::tensor::{Scalar, Tensor};

/// 3×3 convolution, stride 1, zero padding. `weight` is `[tap][c_in][c_out]`
/// with `tap = ky·3 + kx`.
pub fn conv3x3<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: &[T], _scratch: &mut Vec<T>) -> Tensor<T> {
    let (h, w, cin) = x.shape();
    let mut out = Tensor::zeros(h, w, bias.len());
    conv_forward(&x.data, h, w, cin, weight, bias, &mut out.data);
    out
}

/// Accumulates weight/bias gradients into `dw`/`db` and returns the input
/// gradient when `need_dx`. `scratch` holds the adjoint weights.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    dout: &Tensor<T>,
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
    scratch: &mut Vec<T>,
) -> Option<Tensor<T>> {
    let (h, w, cin) = x.shape();
    let cout = dout.c;
    conv_weight_grad(&x.data, h, w, cin, &dout.data, dw);
    for row in dout.data.chunks_exact(cout) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    if !need_dx {
        return None;
    }
    adjoint_weights(weight, cin, cout, scratch);
    let mut dx = Tensor::zeros(h, w, cin);
    conv_forward(&dout.data, h, w, cout, scratch, &vec![T::ZERO; cin], &mut dx.data);
    Some(dx)
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(
        x.h,
        x.w,
        x.c,
        x.data.iter().map(|&v| if v > T::ZERO { v } else { T::ZERO }).collect(),
    )
}

/// Gradient through ReLU given its output.
pub fn relu_backward<T: Scalar>(out: &Tensor<T>, dout: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(
        out.h,
        out.w,
        out.c,
        out.data
            .iter()
            .zip(&dout.data)
            .map(|(&o, &g)| if o > T::ZERO { g } else { T::ZERO })
            .collect(),
    )
}

/// `s×s` max pooling; returns the flat input index of each maximum.
pub fn max_pool<T: Scalar>(x: &Tensor<T>, s: usize) -> (Tensor<T>, Vec<u32>) {
    let (h, w, c) = x.shape();
    assert!(h % s == 0 && w % s == 0, "pool factor must divide the input");
    let (oh, ow) = (h / s, w / s);
    let mut out = Tensor::zeros(oh, ow, c);
    let mut arg = vec![0u32; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = (x.at(oy * s, ox * s, ch), ((oy * s) * w + ox * s) * c + ch);
                for dy in 0..s {
                    for dx in 0..s {
                        let i = ((oy * s + dy) * w + ox * s + dx) * c + ch;
                        if x.data[i] > best.0 {
                            best = (x.data[i], i);
                        }
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out.data[o] = best.0;
                arg[o] = best.1 as u32;
            }
        }
    }
    (out, arg)
}

pub fn max_pool_backward<T: Scalar>(dout: &Tensor<T>, arg: &[u32], h: usize, w: usize) -> Tensor<T> {
    let mut dx = Tensor::zeros(h, w, dout.c);
    for (&i, &g) in arg.iter().zip(&dout.data) {
        dx.data[i as usize] += g;
    }
    dx
}

/// Nearest-neighbour upsampling by `s`.
pub fn upsample<T: Scalar>(x: &Tensor<T>, s: usize) -> Tensor<T> {
    let (h, w, c) = x.shape();
    let mut out = Tensor::zeros(h * s, w * s, c);
    for y in 0..h * s {
        for xx in 0..w * s {
            let src = ((y / s) * w + xx / s) * c;
            let dst = (y * w * s + xx) * c;
            out.data[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
        }
    }
    out
}

pub fn upsample_backward<T: Scalar>(dout: &Tensor<T>, s: usize) -> Tensor<T> {
    let (h, w, c) = (dout.h / s, dout.w / s, dout.c);
    let mut dx = Tensor::zeros(h, w, c);
    for y in 0..dout.h {
        for xx in 0..dout.w {
            let src = (y * dout.w + xx) * c;
            let dst = ((y / s) * w + xx / s) * c;
            for ch in 0..c {
                dx.data[dst + ch] += dout.data[src + ch];
            }
        }
    }
    dx
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_eq!(a.shape(), b.shape(), "add shapes");
    Tensor::from_vec(a.h, a.w, a.c, a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect())
}

/// Channel-wise concatenation of same-sized tensors.
pub fn concat<T: Scalar>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let (h, w) = (parts[0].h, parts[0].w);
    assert!(parts.iter().all(|p| p.h == h && p.w == w), "concat sizes");
    let c: usize = parts.iter().map(|p| p.c).sum();
    let mut data = Vec::with_capacity(h * w * c);
    for i in 0..h * w {
        for p in parts {
            data.extend_from_slice(&p.data[i * p.c..(i + 1) * p.c]);
        }
    }
    Tensor::from_vec(h, w, c, data)
}

pub fn concat_backward<T: Scalar>(dout: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let mut parts: Vec<Tensor<T>> = channels.iter().map(|&c| Tensor::zeros(dout.h, dout.w, c)).collect();
    for i in 0..dout.h * dout.w {
        let mut off = i * dout.c;
        for p in parts.iter_mut() {
            let c = p.c;
            p.data[i * c..(i + 1) * c].copy_from_slice(&dout.data[off..off + c]);
            off += c;
        }
    }
    parts
}

/// Masked mean-squared error over all channels of masked pixels, and its
/// gradient scaled by `1 / normalizer` (pass the element count of the whole
/// batch so per-sample gradients sum to the batch gradient).
pub fn masked_mse<T: Scalar>(out: &Tensor<T>, target: &Tensor<T>, mask: &[bool], normalizer: f64) -> (f64, Tensor<T>) {
    assert_eq!(out.shape(), target.shape(), "loss shapes");
    assert_eq!(mask.len(), out.h * out.w, "mask size");
    let c = out.c;
    let mut sum = 0.0;
    let mut grad = Tensor::zeros(out.h, out.w, c);
    let scale = T::from_f64(2.0 / normalizer);
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        for ch in 0..c {
            let j = i * c + ch;
            let d = out.data[j] - target.data[j];
            sum += d.to_f64() * d.to_f64();
            grad.data[j] = scale * d;
        }
    }
    (sum / normalizer, grad)
}
