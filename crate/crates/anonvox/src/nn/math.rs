//! Plain (non-tape) numeric helpers shared by training ops and inference.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

/// Row-parallel matrix product. Deterministic: each output row block is
/// computed independently, so thread scheduling cannot change results.
pub fn matmul(a: ArrayView2<f32>, b: ArrayView2<f32>) -> Array2<f32> {
    let (n, k) = a.dim();
    let m = b.dim().1;
    assert_eq!(k, b.dim().0, "matmul inner dims {} vs {}", k, b.dim().0);
    // Small products are cheaper single-threaded.
    if n < 64 || n * k * m < 1 << 18 {
        return a.dot(&b);
    }
    let mut out = Array2::<f32>::zeros((n, m));
    let half = n / 2;
    let (a_top, a_bot) = a.split_at(Axis(0), half);
    let (mut o_top, mut o_bot) = out.view_mut().split_at(Axis(0), half);
    rayon::join(
        || o_top.assign(&a_top.dot(&b)),
        || o_bot.assign(&a_bot.dot(&b)),
    );
    out
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub fn sigmoid_map(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(sigmoid)
}

pub fn tanh_map(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(f32::tanh)
}

pub fn relu_map(x: &Array2<f32>) -> Array2<f32> {
    x.mapv(|v| v.max(0.0))
}

/// log(sum(exp(xs))) without overflow.
pub fn logsumexp(xs: &[f32]) -> f32 {
    let m = xs.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    if m == f32::NEG_INFINITY {
        return f32::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f32>().ln()
}

/// Row-wise softmax.
pub fn softmax_rows(x: &Array2<f32>) -> Array2<f32> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(x: &Array2<f32>) -> Array2<f32> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let lse = logsumexp(row.as_slice().expect("contiguous row"));
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// One GRU step without a tape. `gx` is the precomputed input-side
/// pre-activation `x @ w_ih + b_ih`, laid out as [r | z | n] chunks of width
/// `h`. Hidden side uses the usual reset-before-candidate convention:
/// `n = tanh(gx_n + r * (h @ u_n + bh_n))`.
pub fn gru_cell_infer(
    gx: &Array2<f32>,
    h: &Array2<f32>,
    u: &Array2<f32>,
    bh: &Array2<f32>,
) -> Array2<f32> {
    let hidden = h.dim().1;
    let gh = matmul(h.view(), u.view()) + bh;
    let b = h.dim().0;
    let mut out = Array2::<f32>::zeros((b, hidden));
    for i in 0..b {
        for j in 0..hidden {
            let r = sigmoid(gx[[i, j]] + gh[[i, j]]);
            let z = sigmoid(gx[[i, hidden + j]] + gh[[i, hidden + j]]);
            let n = (gx[[i, 2 * hidden + j]] + r * gh[[i, 2 * hidden + j]]).tanh();
            out[[i, j]] = (1.0 - z) * n + z * h[[i, j]];
        }
    }
    out
}

/// Per-offset row indices for an im2col 1-D convolution over rows: output
/// frame `t` reads input rows `t*stride - pad + o` for each kernel offset
/// `o`; out-of-range taps are `None` (zero padding). `pad = (kernel-1)/2`.
pub fn im2col_indices(
    t_in: usize,
    kernel: usize,
    stride: usize,
) -> (usize, Vec<Vec<Option<usize>>>) {
    assert!(kernel % 2 == 1, "odd kernels only");
    let pad = (kernel - 1) / 2;
    let t_out = (t_in + 2 * pad - kernel) / stride + 1;
    let mut per_offset = vec![Vec::with_capacity(t_out); kernel];
    for t in 0..t_out {
        for (o, column) in per_offset.iter_mut().enumerate() {
            let i = (t * stride + o) as isize - pad as isize;
            column.push(if (0..t_in as isize).contains(&i) {
                Some(i as usize)
            } else {
                None
            });
        }
    }
    (t_out, per_offset)
}

/// Plain 1-D convolution over rows: `x` [T, C_in], `w` [(kernel*C_in), C_out],
/// `b` [1, C_out]; zero padding, odd kernel.
pub fn conv1d_infer(
    x: &Array2<f32>,
    w: &Array2<f32>,
    b: &Array2<f32>,
    kernel: usize,
    stride: usize,
) -> Array2<f32> {
    let (t_in, c_in) = x.dim();
    assert_eq!(w.dim().0, kernel * c_in);
    let (t_out, per_offset) = im2col_indices(t_in, kernel, stride);
    let mut cols = Array2::zeros((t_out, kernel * c_in));
    for (o, offsets) in per_offset.iter().enumerate() {
        for (t, idx) in offsets.iter().enumerate() {
            if let Some(i) = idx {
                cols.slice_mut(ndarray::s![t, o * c_in..(o + 1) * c_in])
                    .assign(&x.row(*i));
            }
        }
    }
    matmul(cols.view(), w.view()) + &b.row(0)
}

/// Cosine similarity of two equal-length vectors; 0 when either is all-zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = (na * nb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Deterministic parallel map preserving input order.
pub fn par_map<T: Sync, R: Send, F: Fn(&T) -> R + Sync>(items: &[T], f: F) -> Vec<R> {
    items.par_iter().map(|t| f(t)).collect()
}
