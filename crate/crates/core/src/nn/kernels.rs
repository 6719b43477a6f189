use alloc::vec;
use alloc::vec::Vec;

/// Dot product with eight independent partial sums so the loop vectorizes.
/// Summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Patch matrix `[P][ky][kx][c]`, one row per output pixel.
pub(crate) fn im2col(
    input: &[f64],
    in_shape: [usize; 3],
    k: usize,
    stride: usize,
    out_shape: [usize; 3],
) -> Vec<f64> {
    let [_, w, c] = in_shape;
    let [oh, ow, _] = out_shape;
    let row_len = k * c;
    let patch = k * row_len;
    let mut cols = vec![0.0; oh * ow * patch];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut cols[(oy * ow + ox) * patch..][..patch];
            for ky in 0..k {
                let start = ((oy * stride + ky) * w + ox * stride) * c;
                dst[ky * row_len..(ky + 1) * row_len]
                    .copy_from_slice(&input[start..start + row_len]);
            }
        }
    }
    cols
}

pub(crate) fn conv_forward(
    cols: &[f64],
    weights: &[f64],
    bias: &[f64],
    out_shape: [usize; 3],
) -> Vec<f64> {
    let oc = out_shape[2];
    let pixels = out_shape[0] * out_shape[1];
    let patch = weights.len() / oc;
    let mut out = vec![0.0; pixels * oc];
    for p in 0..pixels {
        let col = &cols[p * patch..(p + 1) * patch];
        let dst = &mut out[p * oc..(p + 1) * oc];
        for (o, d) in dst.iter_mut().enumerate() {
            *d = bias[o] + dot(&weights[o * patch..(o + 1) * patch], col);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    upstream: &[f64],
    cols: &[f64],
    weights: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    in_shape: [usize; 3],
    out_shape: [usize; 3],
    k: usize,
    stride: usize,
    need_input_grad: bool,
) -> Vec<f64> {
    let oc = out_shape[2];
    let [oh, ow, _] = out_shape;
    let patch = weights.len() / oc;
    let mut dcol = if need_input_grad {
        vec![0.0; patch]
    } else {
        Vec::new()
    };
    let mut dinput = if need_input_grad {
        vec![0.0; in_shape.iter().product()]
    } else {
        Vec::new()
    };
    let [_, w, c] = in_shape;
    let row_len = k * c;
    for oy in 0..oh {
        for ox in 0..ow {
            let p = oy * ow + ox;
            let g = &upstream[p * oc..(p + 1) * oc];
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let col = &cols[p * patch..(p + 1) * patch];
            if need_input_grad {
                dcol.iter_mut().for_each(|v| *v = 0.0);
            }
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                grad_b[o] += go;
                axpy(go, col, &mut grad_w[o * patch..(o + 1) * patch]);
                if need_input_grad {
                    axpy(go, &weights[o * patch..(o + 1) * patch], &mut dcol);
                }
            }
            if need_input_grad {
                for ky in 0..k {
                    let start = ((oy * stride + ky) * w + ox * stride) * c;
                    for (d, s) in dinput[start..start + row_len]
                        .iter_mut()
                        .zip(&dcol[ky * row_len..(ky + 1) * row_len])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
    dinput
}

pub(crate) fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + dot(&weights[o * n..(o + 1) * n], input))
        .collect()
}

pub(crate) fn dense_backward(
    upstream: &[f64],
    input: &[f64],
    weights: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let n = input.len();
    let mut dinput = if need_input_grad {
        vec![0.0; n]
    } else {
        Vec::new()
    };
    for (o, &g) in upstream.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad_b[o] += g;
        axpy(g, input, &mut grad_w[o * n..(o + 1) * n]);
        if need_input_grad {
            axpy(g, &weights[o * n..(o + 1) * n], &mut dinput);
        }
    }
    dinput
}
