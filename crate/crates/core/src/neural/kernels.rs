//! Direct 3×3 convolution kernels on HWC tensors.
//!
//! Weights are laid out `[tap][c_in][c_out]` with `tap = ky·3 + kx`, so for
//! a fixed `ky` the three taps and the matching input pixels are contiguous.
//! Common output widths get a fixed-size accumulator; on x86-64 the same code
//! is also compiled with AVX2 enabled and selected at run time. No operation
//! is reassociated, so every path produces identical results.

use super::tensor::Scalar;

/// Output pixels computed together; their accumulators are independent, which
/// hides the add latency without changing any summation order.
const PIXEL_BLOCK: usize = 4;

#[inline(always)]
fn forward_pixel<T: Scalar, const N: usize>(
    x: &[T],
    h: usize,
    w: usize,
    cin: usize,
    wt: &[T],
    bias: &[T],
    y: usize,
    xx: usize,
    out: &mut [T],
) {
    let mut acc = [T::ZERO; N];
    acc.copy_from_slice(&bias[..N]);
    let kx0 = usize::from(xx == 0);
    let kx1 = if xx + 1 == w { 2 } else { 3 };
    for ky in 0..3 {
        if (y == 0 && ky == 0) || (y + 1 == h && ky == 2) {
            continue;
        }
        let base = ((y + ky - 1) * w + xx + kx0 - 1) * cin;
        let seg = &x[base..base + (kx1 - kx0) * cin];
        let wseg = &wt[(ky * 3 + kx0) * cin * N..(ky * 3 + kx1) * cin * N];
        for (&a, wr) in seg.iter().zip(wseg.chunks_exact(N)) {
            let wr: &[T; N] = wr.try_into().expect("chunk of N");
            for co in 0..N {
                acc[co] += a * wr[co];
            }
        }
    }
    out[(y * w + xx) * N..(y * w + xx + 1) * N].copy_from_slice(&acc);
}

#[inline(always)]
fn forward_body<T: Scalar, const N: usize>(
    x: &[T],
    h: usize,
    w: usize,
    cin: usize,
    wt: &[T],
    bias: &[T],
    out: &mut [T],
) {
    const B: usize = PIXEL_BLOCK;
    for y in 0..h {
        forward_pixel::<T, N>(x, h, w, cin, wt, bias, y, 0, out);
        let mut xx = 1;
        // interior pixels see all three column taps
        while xx + B < w {
            let mut acc = [[T::ZERO; N]; B];
            for a in acc.iter_mut() {
                a.copy_from_slice(&bias[..N]);
            }
            for ky in 0..3 {
                if (y == 0 && ky == 0) || (y + 1 == h && ky == 2) {
                    continue;
                }
                let base = ((y + ky - 1) * w + xx - 1) * cin;
                let seg = &x[base..base + (B + 2) * cin];
                let wseg = &wt[ky * 3 * cin * N..(ky * 3 + 3) * cin * N];
                for (j, wr) in wseg.chunks_exact(N).enumerate() {
                    let wr: &[T; N] = wr.try_into().expect("chunk of N");
                    for (p, a) in acc.iter_mut().enumerate() {
                        let v = seg[p * cin + j];
                        for co in 0..N {
                            a[co] += v * wr[co];
                        }
                    }
                }
            }
            for (p, a) in acc.iter().enumerate() {
                out[(y * w + xx + p) * N..(y * w + xx + p + 1) * N].copy_from_slice(a);
            }
            xx += B;
        }
        while xx < w {
            forward_pixel::<T, N>(x, h, w, cin, wt, bias, y, xx, out);
            xx += 1;
        }
    }
}

#[inline(always)]
fn forward_dyn<T: Scalar>(x: &[T], h: usize, w: usize, cin: usize, wt: &[T], bias: &[T], out: &mut [T]) {
    let n = bias.len();
    for y in 0..h {
        for xx in 0..w {
            let acc = &mut out[(y * w + xx) * n..(y * w + xx + 1) * n];
            acc.copy_from_slice(bias);
            let kx0 = usize::from(xx == 0);
            let kx1 = if xx + 1 == w { 2 } else { 3 };
            for ky in 0..3 {
                if (y == 0 && ky == 0) || (y + 1 == h && ky == 2) {
                    continue;
                }
                let base = ((y + ky - 1) * w + xx + kx0 - 1) * cin;
                let seg = &x[base..base + (kx1 - kx0) * cin];
                let wseg = &wt[(ky * 3 + kx0) * cin * n..(ky * 3 + kx1) * cin * n];
                for (&a, wr) in seg.iter().zip(wseg.chunks_exact(n)) {
                    for (o, &wv) in acc.iter_mut().zip(wr) {
                        *o += a * wv;
                    }
                }
            }
        }
    }
}

/// `dw[tap][ci][:] += Σ_p x[p + off(tap)][ci] · dout[p][:]`, one output row
/// at a time so `dw` and the touched rows stay in cache.
#[inline(always)]
fn wgrad_body<T: Scalar, const N: usize>(x: &[T], h: usize, w: usize, cin: usize, dout: &[T], dw: &mut [T]) {
    for y in 0..h {
        let grow = &dout[y * w * N..(y + 1) * w * N];
        for ky in 0..3 {
            if (y == 0 && ky == 0) || (y + 1 == h && ky == 2) {
                continue;
            }
            let xrow = &x[(y + ky - 1) * w * cin..(y + ky) * w * cin];
            for kx in 0..3 {
                let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                let tap = ky * 3 + kx;
                let mut ci = 0;
                while ci < cin {
                    // up to PIXEL_BLOCK input channels with independent accumulators
                    let nb = (cin - ci).min(PIXEL_BLOCK);
                    let mut acc = [[T::ZERO; N]; PIXEL_BLOCK];
                    for (b, a) in acc.iter_mut().enumerate().take(nb) {
                        a.copy_from_slice(&dw[(tap * cin + ci + b) * N..(tap * cin + ci + b + 1) * N]);
                    }
                    for xx in x0..x1 {
                        let xs = &xrow[(xx + kx - 1) * cin + ci..(xx + kx - 1) * cin + ci + nb];
                        let g: &[T; N] = grow[xx * N..(xx + 1) * N].try_into().expect("row of N");
                        if nb == PIXEL_BLOCK {
                            for (b, a) in acc.iter_mut().enumerate() {
                                let v = xs[b];
                                for co in 0..N {
                                    a[co] += v * g[co];
                                }
                            }
                        } else {
                            for (a, &v) in acc.iter_mut().zip(xs) {
                                for co in 0..N {
                                    a[co] += v * g[co];
                                }
                            }
                        }
                    }
                    for (b, a) in acc.iter().enumerate().take(nb) {
                        dw[(tap * cin + ci + b) * N..(tap * cin + ci + b + 1) * N].copy_from_slice(a);
                    }
                    ci += nb;
                }
            }
        }
    }
}

#[inline(always)]
fn wgrad_dyn<T: Scalar>(x: &[T], h: usize, w: usize, cin: usize, dout: &[T], dw: &mut [T]) {
    let n = dout.len() / (h * w);
    for y in 0..h {
        let grow = &dout[y * w * n..(y + 1) * w * n];
        for ky in 0..3 {
            if (y == 0 && ky == 0) || (y + 1 == h && ky == 2) {
                continue;
            }
            let xrow = &x[(y + ky - 1) * w * cin..(y + ky) * w * cin];
            for kx in 0..3 {
                let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                let tap = ky * 3 + kx;
                for ci in 0..cin {
                    let d = &mut dw[(tap * cin + ci) * n..(tap * cin + ci + 1) * n];
                    for xx in x0..x1 {
                        let a = xrow[(xx + kx - 1) * cin + ci];
                        for (o, &gv) in d.iter_mut().zip(&grow[xx * n..(xx + 1) * n]) {
                            *o += a * gv;
                        }
                    }
                }
            }
        }
    }
}

macro_rules! dispatch {
    ($name:ident, $body:ident, $dyn_body:ident, ($($arg:ident : $ty:ty),*), $n:expr) => {{
        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn avx2<T: Scalar, const N: usize>($($arg: $ty),*) {
            $body::<T, N>($($arg),*)
        }

        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn avx2_dyn<T: Scalar>($($arg: $ty),*) {
            $dyn_body::<T>($($arg),*)
        }

        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx512f")]
        unsafe fn avx512<T: Scalar, const N: usize>($($arg: $ty),*) {
            $body::<T, N>($($arg),*)
        }

        fn fixed<T: Scalar, const N: usize>($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the CPU supports AVX-512F.
                return unsafe { avx512::<T, N>($($arg),*) };
            }
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2.
                return unsafe { avx2::<T, N>($($arg),*) };
            }
            $body::<T, N>($($arg),*)
        }

        match $n {
            1 => fixed::<T, 1>($($arg),*),
            2 => fixed::<T, 2>($($arg),*),
            4 => fixed::<T, 4>($($arg),*),
            8 => fixed::<T, 8>($($arg),*),
            16 => fixed::<T, 16>($($arg),*),
            32 => fixed::<T, 32>($($arg),*),
            64 => fixed::<T, 64>($($arg),*),
            _ => {
                #[cfg(target_arch = "x86_64")]
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2.
                    return unsafe { avx2_dyn::<T>($($arg),*) };
                }
                $dyn_body::<T>($($arg),*)
            }
        }
    }};
}

/// `out = conv(x) + bias` with zero padding; `out` has `bias.len()` channels.
pub fn conv_forward<T: Scalar>(x: &[T], h: usize, w: usize, cin: usize, wt: &[T], bias: &[T], out: &mut [T]) {
    let n = bias.len();
    assert_eq!(x.len(), h * w * cin, "conv input size");
    assert_eq!(wt.len(), 9 * cin * n, "conv weight shape");
    assert_eq!(out.len(), h * w * n, "conv output size");
    if h == 0 || w == 0 {
        return;
    }
    dispatch!(
        forward,
        forward_body,
        forward_dyn,
        (x: &[T], h: usize, w: usize, cin: usize, wt: &[T], bias: &[T], out: &mut [T]),
        n
    )
}

/// Accumulates the weight gradient of [`conv_forward`] into `dw`.
pub fn conv_weight_grad<T: Scalar>(x: &[T], h: usize, w: usize, cin: usize, dout: &[T], dw: &mut [T]) {
    let n = dout.len() / (h * w).max(1);
    assert_eq!(x.len(), h * w * cin, "conv input size");
    assert_eq!(dout.len(), h * w * n, "conv output gradient size");
    assert_eq!(dw.len(), 9 * cin * n, "conv weight gradient shape");
    if h == 0 || w == 0 {
        return;
    }
    dispatch!(
        wgrad,
        wgrad_body,
        wgrad_dyn,
        (x: &[T], h: usize, w: usize, cin: usize, dout: &[T], dw: &mut [T]),
        n
    )
}

/// Weights of the adjoint convolution: taps mirrored, `c_in`/`c_out` swapped.
pub fn adjoint_weights<T: Scalar>(wt: &[T], cin: usize, cout: usize, out: &mut Vec<T>) {
    out.clear();
    out.resize(wt.len(), T::ZERO);
    for tap in 0..9 {
        for ci in 0..cin {
            for co in 0..cout {
                out[((8 - tap) * cout + co) * cin + ci] = wt[(tap * cin + ci) * cout + co];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook loop over output pixels and taps.
    fn reference_conv(x: &[f64], h: usize, w: usize, cin: usize, wt: &[f64], bias: &[f64]) -> Vec<f64> {
        let n = bias.len();
        let mut out = vec![0.0; h * w * n];
        for y in 0..h as isize {
            for xx in 0..w as isize {
                for co in 0..n {
                    let mut s = bias[co];
                    for ky in 0..3isize {
                        for kx in 0..3isize {
                            let (sy, sx) = (y + ky - 1, xx + kx - 1);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let tap = (ky * 3 + kx) as usize;
                                s += x[(sy as usize * w + sx as usize) * cin + ci] * wt[(tap * cin + ci) * n + co];
                            }
                        }
                    }
                    out[(y as usize * w + xx as usize) * n + co] = s;
                }
            }
        }
        out
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn matches_reference_for_fixed_and_dynamic_widths() {
        let mut seed = 3;
        for &(h, w, cin, n) in &[(1, 1, 1, 1), (2, 3, 2, 16), (5, 4, 3, 3), (4, 7, 5, 8), (3, 3, 16, 2), (1, 6, 2, 5)] {
            let x: Vec<f64> = (0..h * w * cin).map(|_| lcg(&mut seed)).collect();
            let wt: Vec<f64> = (0..9 * cin * n).map(|_| lcg(&mut seed)).collect();
            let b: Vec<f64> = (0..n).map(|_| lcg(&mut seed)).collect();
            let mut out = vec![0.0; h * w * n];
            conv_forward(&x, h, w, cin, &wt, &b, &mut out);
            let r = reference_conv(&x, h, w, cin, &wt, &b);
            for (a, b) in out.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_is_the_transpose() {
        // <conv(x), g> = <x, conv_adjoint(g)>
        let mut seed = 9;
        let (h, w, cin, n) = (4, 5, 3, 2);
        let x: Vec<f64> = (0..h * w * cin).map(|_| lcg(&mut seed)).collect();
        let g: Vec<f64> = (0..h * w * n).map(|_| lcg(&mut seed)).collect();
        let wt: Vec<f64> = (0..9 * cin * n).map(|_| lcg(&mut seed)).collect();
        let mut y = vec![0.0; h * w * n];
        conv_forward(&x, h, w, cin, &wt, &vec![0.0; n], &mut y);
        let mut adj = Vec::new();
        adjoint_weights(&wt, cin, n, &mut adj);
        let mut xt = vec![0.0; h * w * cin];
        conv_forward(&g, h, w, n, &adj, &vec![0.0; cin], &mut xt);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&xt).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
