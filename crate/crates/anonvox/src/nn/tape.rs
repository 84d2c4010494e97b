//! Tape-based reverse-mode autodiff.
//!
//! A [`Var`] is an index into the tape. Ops push one node holding the forward
//! value plus a backward closure that routes the upstream gradient to the
//! node's parents. Backward closures receive the whole tape immutably so they
//! can read parent values without cloning them at build time.

use ndarray::{s, Array2, Axis};

use super::math;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

type BackwardFn = Box<dyn Fn(&Array2<f32>, &Tape, &mut Grads)>;

struct Node {
    value: Array2<f32>,
    backward: Option<BackwardFn>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Grads(Vec<Option<Array2<f32>>>);

impl Grads {
    /// Gradient of the loss w.r.t. `v`; zeros if the var is unreachable.
    pub fn get(&self, v: Var, tape: &Tape) -> Array2<f32> {
        match &self.0[v.0] {
            Some(g) => g.clone(),
            None => Array2::zeros(tape.value(v).dim()),
        }
    }

    pub(crate) fn accum(&mut self, idx: usize, delta: Array2<f32>) {
        match &mut self.0[idx] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }
}

/// Computation tape. Build one per training step.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a var.
    pub fn value(&self, v: Var) -> &Array2<f32> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f32>, backward: Option<BackwardFn>) -> Var {
        self.nodes.push(Node { value, backward });
        Var(self.nodes.len() - 1)
    }

    /// Insert a leaf (no gradient flows past it, but its gradient is kept).
    pub fn leaf(&mut self, value: Array2<f32>) -> Var {
        self.push(value, None)
    }

    /// Reverse pass from a scalar loss ([1,1] value).
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be scalar");
        let mut grads = Grads(vec![None; self.nodes.len()]);
        grads.0[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads.0[i].take() else { continue };
            if let Some(bw) = &self.nodes[i].backward {
                bw(&g, self, &mut grads);
            }
            grads.0[i] = Some(g);
        }
        grads
    }

    // ---- arithmetic ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = math::matmul(self.value(a).view(), self.value(b).view());
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let bv = t.value(b);
                let av = t.value(a);
                gr.accum(a.0, math::matmul(g.view(), bv.t()));
                gr.accum(b.0, math::matmul(av.t(), g.view()));
            })),
        )
    }

    /// `x @ w + b` with `b` broadcast over rows; one node.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let mut value = math::matmul(self.value(x).view(), self.value(w).view());
        value += &self.value(b).row(0);
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                gr.accum(x.0, math::matmul(g.view(), t.value(w).t()));
                gr.accum(w.0, math::matmul(t.value(x).t(), g.view()));
                gr.accum(b.0, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        )
    }

    /// `a @ b^T`; saves materializing transposes at the call site.
    pub fn matmul_t_b(&mut self, a: Var, b: Var) -> Var {
        let value = math::matmul(self.value(a).view(), self.value(b).t());
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                gr.accum(a.0, math::matmul(g.view(), t.value(b).view()));
                gr.accum(b.0, math::matmul(g.t(), t.value(a).view()));
            })),
        )
    }

    /// `a * s` with a scalar ([1,1]) var broadcast elementwise.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s)[[0, 0]];
        let value = self.value(a) * sv;
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let sv = t.value(s)[[0, 0]];
                gr.accum(a.0, g * sv);
                gr.accum(s.0, Array2::from_elem((1, 1), (g * t.value(a)).sum()));
            })),
        )
    }

    /// `a * s + c` with scalar ([1,1]) vars `s` and `c` broadcast elementwise.
    pub fn affine_scalar(&mut self, a: Var, s: Var, c: Var) -> Var {
        let sv = self.value(s)[[0, 0]];
        let cv = self.value(c)[[0, 0]];
        let value = self.value(a) * sv + cv;
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let sv = t.value(s)[[0, 0]];
                gr.accum(a.0, g * sv);
                gr.accum(
                    s.0,
                    Array2::from_elem((1, 1), (g * t.value(a)).sum()),
                );
                gr.accum(c.0, Array2::from_elem((1, 1), g.sum()));
            })),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(
            value,
            Some(Box::new(move |g, _, gr| {
                gr.accum(a.0, g.clone());
                gr.accum(b.0, g.clone());
            })),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(
            value,
            Some(Box::new(move |g, _, gr| {
                gr.accum(a.0, g.clone());
                gr.accum(b.0, -g);
            })),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                gr.accum(a.0, g * t.value(b));
                gr.accum(b.0, g * t.value(a));
            })),
        )
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let value = self.value(a) * c;
        self.push(
            value,
            Some(Box::new(move |g, _, gr| {
                gr.accum(a.0, g * c);
            })),
        )
    }

    // ---- nonlinearities ----

    pub fn relu(&mut self, a: Var) -> Var {
        let value = math::relu_map(self.value(a));
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let av = t.value(a);
                let mut d = g.clone();
                d.zip_mut_with(av, |gv, &x| {
                    if x <= 0.0 {
                        *gv = 0.0;
                    }
                });
                gr.accum(a.0, d);
            })),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = math::sigmoid_map(self.value(a));
        let out = self.push(value, None);
        self.nodes[out.0].backward = Some(Box::new(move |g, t, gr| {
            let y = t.value(out);
            gr.accum(a.0, g * &(y * &(1.0 - y)));
        }));
        out
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = math::tanh_map(self.value(a));
        let out = self.push(value, None);
        self.nodes[out.0].backward = Some(Box::new(move |g, t, gr| {
            let y = t.value(out);
            gr.accum(a.0, g * &(1.0 - y * y));
        }));
        out
    }

    // ---- shape ops ----

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        assert_eq!(av.dim().0, bv.dim().0, "concat_cols row mismatch");
        let (rows, ca) = av.dim();
        let cb = bv.dim().1;
        let mut value = Array2::zeros((rows, ca + cb));
        value.slice_mut(s![.., ..ca]).assign(av);
        value.slice_mut(s![.., ca..]).assign(bv);
        self.push(
            value,
            Some(Box::new(move |g, _, gr| {
                gr.accum(a.0, g.slice(s![.., ..ca]).to_owned());
                gr.accum(b.0, g.slice(s![.., ca..]).to_owned());
            })),
        )
    }

    /// Gather rows by index; `None` entries produce zero rows (used as the
    /// padding rows for im2col-style convolutions).
    pub fn gather_rows(&mut self, a: Var, indices: Vec<Option<usize>>) -> Var {
        let av = self.value(a);
        let cols = av.dim().1;
        let mut value = Array2::zeros((indices.len(), cols));
        for (out_i, idx) in indices.iter().enumerate() {
            if let Some(i) = idx {
                value.row_mut(out_i).assign(&av.row(*i));
            }
        }
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let mut d = Array2::zeros(t.value(a).dim());
                for (out_i, idx) in indices.iter().enumerate() {
                    if let Some(i) = idx {
                        let mut row = d.row_mut(*i);
                        row += &g.row(out_i);
                    }
                }
                gr.accum(a.0, d);
            })),
        )
    }

    /// Stack several vars with equal column counts into one row-block matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).dim().1;
        let heights: Vec<usize> = parts.iter().map(|p| self.value(*p).dim().0).collect();
        let total: usize = heights.iter().sum();
        let mut value = Array2::zeros((total, cols));
        let mut at = 0;
        for (p, h) in parts.iter().zip(&heights) {
            value.slice_mut(s![at..at + h, ..]).assign(self.value(*p));
            at += h;
        }
        let parts: Vec<Var> = parts.to_vec();
        self.push(
            value,
            Some(Box::new(move |g, _, gr| {
                let mut at = 0;
                for (p, h) in parts.iter().zip(&heights) {
                    gr.accum(p.0, g.slice(s![at..at + *h, ..]).to_owned());
                    at += h;
                }
            })),
        )
    }

    /// Mean over time (rows), producing a [1, C] row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let rows = av.dim().0 as f32;
        let value = av.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let dim = t.value(a).dim();
                let mut d = Array2::zeros(dim);
                for mut row in d.rows_mut() {
                    row.assign(&(g.row(0).to_owned() / rows));
                }
                gr.accum(a.0, d);
            })),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.len() as f32;
        let value = Array2::from_elem((1, 1), av.sum() / n);
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let dim = t.value(a).dim();
                gr.accum(a.0, Array2::from_elem(dim, g[[0, 0]] / n));
            })),
        )
    }

    /// `mean over rows of (sum over cols of (a-b)^2)`; the reduction used by
    /// the quantizer losses.
    pub fn sq_norm_loss(&mut self, a: Var, b: Var) -> Var {
        let diff = self.value(a) - self.value(b);
        let rows = diff.dim().0 as f32;
        let value = Array2::from_elem((1, 1), diff.mapv(|x| x * x).sum() / rows);
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let diff = t.value(a) - t.value(b);
                let scale = 2.0 * g[[0, 0]] / diff.dim().0 as f32;
                gr.accum(a.0, &diff * scale);
                gr.accum(b.0, &diff * (-scale));
            })),
        )
    }

    /// Forward value equals `quantized`; gradient flows to `encoded`
    /// untouched (the discretization bottleneck's gradient bypass).
    pub fn straight_through(&mut self, encoded: Var, quantized: Array2<f32>) -> Var {
        assert_eq!(self.value(encoded).dim(), quantized.dim());
        self.push(
            quantized,
            Some(Box::new(move |g, _, gr| {
                gr.accum(encoded.0, g.clone());
            })),
        )
    }

    /// 1-D convolution over rows via im2col: `x` [T, C_in] with weights
    /// [(kernel*C_in), C_out]; zero padding, odd kernel.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, kernel: usize, stride: usize) -> Var {
        let t_in = self.value(x).dim().0;
        let (_, per_offset) = math::im2col_indices(t_in, kernel, stride);
        let mut cols: Option<Var> = None;
        for offsets in per_offset {
            let gathered = self.gather_rows(x, offsets);
            cols = Some(match cols {
                None => gathered,
                Some(c) => self.concat_cols(c, gathered),
            });
        }
        self.affine(cols.expect("kernel >= 1"), w, b)
    }

    // ---- losses ----

    /// Mean categorical negative log-likelihood of integer targets under
    /// `softmax(logits)` rows.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lp = math::log_softmax_rows(self.value(logits));
        assert_eq!(lp.dim().0, targets.len());
        let n = targets.len() as f32;
        let mut nll = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            nll -= lp[[i, t]];
        }
        let targets: Vec<usize> = targets.to_vec();
        let value = Array2::from_elem((1, 1), nll / n);
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let mut d = math::softmax_rows(t.value(logits));
                for (i, &c) in targets.iter().enumerate() {
                    d[[i, c]] -= 1.0;
                }
                gr.accum(logits.0, d * (g[[0, 0]] / n));
            })),
        )
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` ([N,1]) against 0/1
    /// labels, computed in the numerically stable logit form.
    pub fn bce_logits(&mut self, logits: Var, labels: &[f32]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.dim(), (labels.len(), 1));
        let n = labels.len() as f32;
        let mut loss = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let x = lv[[i, 0]];
            loss += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        }
        let labels: Vec<f32> = labels.to_vec();
        let value = Array2::from_elem((1, 1), loss / n);
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let lv = t.value(logits);
                let mut d = Array2::zeros((labels.len(), 1));
                for (i, &y) in labels.iter().enumerate() {
                    d[[i, 0]] = (math::sigmoid(lv[[i, 0]]) - y) * g[[0, 0]] / n;
                }
                gr.accum(logits.0, d);
            })),
        )
    }

    // ---- fused layers ----

    /// Fused GRU step. `gx` [B,3H] is the precomputed input-side
    /// pre-activation (including input bias), `h` [B,H] the previous hidden
    /// state, `u` [H,3H] the hidden weights and `bh` [1,3H] the hidden bias.
    /// Gate layout [r|z|n]; candidate uses `r * (h@u_n + bh_n)`.
    pub fn gru_cell(&mut self, gx: Var, h: Var, u: Var, bh: Var) -> Var {
        let hd = self.value(h).dim().1;
        let b = self.value(h).dim().0;
        assert_eq!(self.value(gx).dim(), (b, 3 * hd));
        let gh = math::matmul(self.value(h).view(), self.value(u).view())
            + &self.value(bh).row(0);
        let gxv = self.value(gx);
        let hv = self.value(h);
        let mut r = Array2::zeros((b, hd));
        let mut z = Array2::zeros((b, hd));
        let mut n = Array2::zeros((b, hd));
        let mut ghn = Array2::zeros((b, hd));
        let mut out = Array2::zeros((b, hd));
        for i in 0..b {
            for j in 0..hd {
                let rv = math::sigmoid(gxv[[i, j]] + gh[[i, j]]);
                let zv = math::sigmoid(gxv[[i, hd + j]] + gh[[i, hd + j]]);
                let gn = gh[[i, 2 * hd + j]];
                let nv = (gxv[[i, 2 * hd + j]] + rv * gn).tanh();
                r[[i, j]] = rv;
                z[[i, j]] = zv;
                n[[i, j]] = nv;
                ghn[[i, j]] = gn;
                out[[i, j]] = (1.0 - zv) * nv + zv * hv[[i, j]];
            }
        }
        self.push(
            out,
            Some(Box::new(move |g, t, gr| {
                let hv = t.value(h);
                let uv = t.value(u);
                let mut d_gx = Array2::zeros((b, 3 * hd));
                let mut d_gh = Array2::zeros((b, 3 * hd));
                let mut d_h_direct = Array2::zeros((b, hd));
                for i in 0..b {
                    for j in 0..hd {
                        let go = g[[i, j]];
                        let (rv, zv, nv, gn) = (r[[i, j]], z[[i, j]], n[[i, j]], ghn[[i, j]]);
                        let dz = go * (hv[[i, j]] - nv) * zv * (1.0 - zv);
                        let dn_pre = go * (1.0 - zv) * (1.0 - nv * nv);
                        let dr = dn_pre * gn * rv * (1.0 - rv);
                        d_h_direct[[i, j]] = go * zv;
                        d_gx[[i, j]] = dr;
                        d_gx[[i, hd + j]] = dz;
                        d_gx[[i, 2 * hd + j]] = dn_pre;
                        d_gh[[i, j]] = dr;
                        d_gh[[i, hd + j]] = dz;
                        d_gh[[i, 2 * hd + j]] = dn_pre * rv;
                    }
                }
                // gh = h @ u + bh
                gr.accum(h.0, math::matmul(d_gh.view(), uv.t()) + d_h_direct);
                gr.accum(u.0, math::matmul(hv.t(), d_gh.view()));
                gr.accum(bh.0, d_gh.sum_axis(Axis(0)).insert_axis(Axis(0)));
                gr.accum(gx.0, d_gx);
            })),
        )
    }

    /// Batch normalization over rows, per column, training mode. Returns the
    /// normalized output plus the batch mean/variance for running-stat
    /// updates outside the tape.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f32,
    ) -> (Var, Array2<f32>, Array2<f32>) {
        let xv = self.value(x);
        let (n, c) = xv.dim();
        assert!(n > 0);
        let mean = xv.mean_axis(Axis(0)).expect("rows").insert_axis(Axis(0));
        let var = xv
            .map_axis(Axis(0), |col| {
                let m = col.mean().unwrap();
                col.iter().map(|v| (v - m) * (v - m)).sum::<f32>() / n as f32
            })
            .insert_axis(Axis(0));
        let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
        let xhat = (xv - &mean) * &inv_std;
        let value = &xhat * &self.value(gamma).row(0) + &self.value(beta).row(0);
        let mean_out = mean.clone();
        let var_out = var.clone();
        let out = self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let gm = t.value(gamma);
                let nf = n as f32;
                // d_xhat = g * gamma
                let d_xhat = g * &gm.row(0);
                let sum_dxhat = d_xhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                let sum_dxhat_xhat = (&d_xhat * &xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                let mut dx = Array2::zeros((n, c));
                for i in 0..n {
                    for j in 0..c {
                        dx[[i, j]] = inv_std[[0, j]] / nf
                            * (nf * d_xhat[[i, j]]
                                - sum_dxhat[[0, j]]
                                - xhat[[i, j]] * sum_dxhat_xhat[[0, j]]);
                    }
                }
                gr.accum(x.0, dx);
                gr.accum(gamma.0, (g * &xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                gr.accum(beta.0, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            })),
        );
        (out, mean_out, var_out)
    }

    /// Max pooling over row pairs (stride 2, ceil mode: an odd trailing row
    /// passes through).
    pub fn maxpool2_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (t_in, c) = av.dim();
        let t_out = t_in.div_ceil(2);
        let mut value = Array2::zeros((t_out, c));
        let mut src = vec![0usize; t_out * c];
        for o in 0..t_out {
            for j in 0..c {
                let i0 = 2 * o;
                let i1 = (2 * o + 1).min(t_in - 1);
                let pick = if av[[i1, j]] > av[[i0, j]] { i1 } else { i0 };
                value[[o, j]] = av[[pick, j]];
                src[o * c + j] = pick;
            }
        }
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let mut d = Array2::zeros(t.value(a).dim());
                for o in 0..t_out {
                    for j in 0..c {
                        d[[src[o * c + j], j]] += g[[o, j]];
                    }
                }
                gr.accum(a.0, d);
            })),
        )
    }

    /// Rows scaled to unit L2 norm.
    pub fn l2_normalize_rows(&mut self, a: Var, eps: f32) -> Var {
        let av = self.value(a);
        let (n, c) = av.dim();
        let norms: Vec<f32> = av
            .rows()
            .into_iter()
            .map(|r| (r.iter().map(|v| v * v).sum::<f32>() + eps).sqrt())
            .collect();
        let mut value = av.clone();
        for (i, mut row) in value.rows_mut().into_iter().enumerate() {
            row /= norms[i];
        }
        let out = self.push(value, None);
        self.nodes[out.0].backward = Some(Box::new(move |g, t, gr| {
            let y = t.value(out);
            let mut d = Array2::zeros((n, c));
            for i in 0..n {
                let gy: f32 = (0..c).map(|j| g[[i, j]] * y[[i, j]]).sum();
                for j in 0..c {
                    d[[i, j]] = (g[[i, j]] - y[[i, j]] * gy) / norms[i];
                }
            }
            gr.accum(a.0, d);
        }));
        out
    }

    /// CTC loss of one utterance: `logits` [T, C] with `blank` as the last
    /// class index convention left to the caller. Returns the scalar negative
    /// log-likelihood. Gradient w.r.t. logits is `softmax - occupancy`.
    pub fn ctc_loss(&mut self, logits: Var, targets: &[usize], blank: usize) -> Var {
        let lp = math::log_softmax_rows(self.value(logits));
        let (t_len, n_classes) = lp.dim();
        // Extended label sequence: blank-separated targets.
        let mut ext = Vec::with_capacity(2 * targets.len() + 1);
        ext.push(blank);
        for &t in targets {
            ext.push(t);
            ext.push(blank);
        }
        let s_len = ext.len();
        assert!(
            t_len >= targets.len(),
            "ctc: {} frames cannot emit {} targets",
            t_len,
            targets.len()
        );
        let ninf = f32::NEG_INFINITY;
        let mut alpha = Array2::from_elem((t_len, s_len), ninf);
        alpha[[0, 0]] = lp[[0, ext[0]]];
        if s_len > 1 {
            alpha[[0, 1]] = lp[[0, ext[1]]];
        }
        for t in 1..t_len {
            for s in 0..s_len {
                let mut terms = vec![alpha[[t - 1, s]]];
                if s >= 1 {
                    terms.push(alpha[[t - 1, s - 1]]);
                }
                if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                    terms.push(alpha[[t - 1, s - 2]]);
                }
                let m = math::logsumexp(&terms);
                if m != ninf {
                    alpha[[t, s]] = m + lp[[t, ext[s]]];
                }
            }
        }
        // beta[t, s]: log-prob of completing from state s AFTER emitting at t.
        let mut beta = Array2::from_elem((t_len, s_len), ninf);
        beta[[t_len - 1, s_len - 1]] = 0.0;
        if s_len > 1 {
            beta[[t_len - 1, s_len - 2]] = 0.0;
        }
        for t in (0..t_len - 1).rev() {
            for s in 0..s_len {
                let mut terms = vec![beta[[t + 1, s]] + lp[[t + 1, ext[s]]]];
                if s + 1 < s_len {
                    terms.push(beta[[t + 1, s + 1]] + lp[[t + 1, ext[s + 1]]]);
                }
                if s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                    terms.push(beta[[t + 1, s + 2]] + lp[[t + 1, ext[s + 2]]]);
                }
                beta[[t, s]] = math::logsumexp(&terms);
            }
        }
        let log_p = math::logsumexp(&[
            alpha[[t_len - 1, s_len - 1]],
            if s_len > 1 { alpha[[t_len - 1, s_len - 2]] } else { ninf },
        ]);
        // Occupancy gamma(t, k) summed over extended states with label k.
        let mut occupancy = Array2::<f32>::zeros((t_len, n_classes));
        if log_p > ninf {
            for t in 0..t_len {
                for s in 0..s_len {
                    let lg = alpha[[t, s]] + beta[[t, s]] - log_p;
                    if lg > -80.0 {
                        occupancy[[t, ext[s]]] += lg.exp();
                    }
                }
            }
        }
        let loss = if log_p > ninf { -log_p } else { 1e30 };
        let value = Array2::from_elem((1, 1), loss);
        self.push(
            value,
            Some(Box::new(move |g, t, gr| {
                let d = (math::softmax_rows(t.value(logits)) - &occupancy) * g[[0, 0]];
                gr.accum(logits.0, d);
            })),
        )
    }
}
