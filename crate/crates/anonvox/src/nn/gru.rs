//! GRU parameter bundles with plain and tape scans.

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

use super::{init, math, Tape, Var};

/// One GRU direction: input weights [in, 3H], hidden weights [H, 3H], biases.
#[derive(Debug, Clone)]
pub struct GruParams {
    pub w_ih: Array2<f32>,
    pub b_ih: Array2<f32>,
    pub u_hh: Array2<f32>,
    pub b_hh: Array2<f32>,
}

impl GruParams {
    pub fn init(in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_ih: init::fan_in(rng, in_dim, 3 * hidden),
            b_ih: init::zeros(1, 3 * hidden),
            u_hh: init::fan_in(rng, hidden, 3 * hidden),
            b_hh: init::zeros(1, 3 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_hh.dim().0
    }

    /// Sequential scan over [T, in], zero initial state, batch of one.
    pub fn scan(&self, x: &Array2<f32>) -> Array2<f32> {
        let t_len = x.dim().0;
        let h_dim = self.hidden();
        let gx = math::matmul(x.view(), self.w_ih.view()) + &self.b_ih.row(0);
        let mut h = Array2::zeros((1, h_dim));
        let mut out = Array2::zeros((t_len, h_dim));
        for t in 0..t_len {
            let gx_t = gx.slice(s![t..t + 1, ..]).to_owned();
            h = math::gru_cell_infer(&gx_t, &h, &self.u_hh, &self.b_hh);
            out.row_mut(t).assign(&h.row(0));
        }
        out
    }

    pub fn params(&self) -> Vec<&Array2<f32>> {
        vec![&self.w_ih, &self.b_ih, &self.u_hh, &self.b_hh]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f32>> {
        vec![&mut self.w_ih, &mut self.b_ih, &mut self.u_hh, &mut self.b_hh]
    }

    pub fn leaves(&self, tape: &mut Tape) -> GruVars {
        GruVars {
            w_ih: tape.leaf(self.w_ih.clone()),
            b_ih: tape.leaf(self.b_ih.clone()),
            u_hh: tape.leaf(self.u_hh.clone()),
            b_hh: tape.leaf(self.b_hh.clone()),
            hidden: self.hidden(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_ih: Var,
    pub b_ih: Var,
    pub u_hh: Var,
    pub b_hh: Var,
    hidden: usize,
}

impl GruVars {
    pub fn all(&self) -> [Var; 4] {
        [self.w_ih, self.b_ih, self.u_hh, self.b_hh]
    }

    /// Tape scan over a [T, in] var; returns the stacked [T, H] states.
    pub fn scan_tape(&self, tape: &mut Tape, x: Var) -> Var {
        let t_len = tape.value(x).dim().0;
        let gx = tape.affine(x, self.w_ih, self.b_ih);
        let mut h = tape.leaf(Array2::zeros((1, self.hidden)));
        let mut states = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let gx_t = tape.gather_rows(gx, vec![Some(t)]);
            h = tape.gru_cell(gx_t, h, self.u_hh, self.b_hh);
            states.push(h);
        }
        tape.stack_rows(&states)
    }
}

/// Bi-directional layer: forward and time-reversed scans concatenated.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: GruParams,
    pub bwd: GruParams,
}

impl BiGru {
    pub fn init(in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            fwd: GruParams::init(in_dim, hidden, rng),
            bwd: GruParams::init(in_dim, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    /// [T, in] -> [T, 2H].
    pub fn scan(&self, x: &Array2<f32>) -> Array2<f32> {
        let t_len = x.dim().0;
        let fwd = self.fwd.scan(x);
        let mut rev_in = Array2::zeros(x.dim());
        for t in 0..t_len {
            rev_in.row_mut(t).assign(&x.row(t_len - 1 - t));
        }
        let rev_out = self.bwd.scan(&rev_in);
        let h = self.hidden();
        let mut out = Array2::zeros((t_len, 2 * h));
        for t in 0..t_len {
            out.slice_mut(s![t, ..h]).assign(&fwd.row(t));
            out.slice_mut(s![t, h..]).assign(&rev_out.row(t_len - 1 - t));
        }
        out
    }

    pub fn params(&self) -> Vec<&Array2<f32>> {
        let mut p = self.fwd.params();
        p.extend(self.bwd.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f32>> {
        let mut p = self.fwd.params_mut();
        p.extend(self.bwd.params_mut());
        p
    }

    pub fn leaves(&self, tape: &mut Tape) -> BiGruVars {
        BiGruVars {
            fwd: self.fwd.leaves(tape),
            bwd: self.bwd.leaves(tape),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiGruVars {
    pub fwd: GruVars,
    pub bwd: GruVars,
}

impl BiGruVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.fwd.all().to_vec();
        v.extend(self.bwd.all());
        v
    }

    pub fn scan_tape(&self, tape: &mut Tape, x: Var) -> Var {
        let t_len = tape.value(x).dim().0;
        let fwd = self.fwd.scan_tape(tape, x);
        let rev_idx: Vec<Option<usize>> = (0..t_len).rev().map(Some).collect();
        let x_rev = tape.gather_rows(x, rev_idx.clone());
        let bwd_rev = self.bwd.scan_tape(tape, x_rev);
        let bwd = tape.gather_rows(bwd_rev, rev_idx);
        tape.concat_cols(fwd, bwd)
    }
}
