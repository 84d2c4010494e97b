//! Adam optimizer over a flat list of parameter matrices.

use ndarray::Array2;

/// Adam state; parameter order must stay stable across steps.
pub struct Adam {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    step: i32,
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
}

impl Adam {
    pub fn new(lr: f32, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn set_lr(&mut self, lr: f32) {
        self.lr = lr;
    }

    /// One update; `params` and `grads` must align with the construction
    /// order. Gradients may be missing for params untouched this step.
    pub fn update(&mut self, params: &mut [&mut Array2<f32>], grads: &[Option<Array2<f32>>]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let Some(g) = &grads[i] else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(g, |mv, &gv| *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv);
            v.zip_mut_with(g, |vv, &gv| *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv);
            let lr = self.lr;
            let eps = self.eps;
            ndarray::Zip::from(&mut **params[i])
                .and(&*m)
                .and(&*v)
                .for_each(|p, &mv, &vv| {
                    *p -= lr * (mv / bc1) / ((vv / bc2).sqrt() + eps);
                });
        }
    }
}
