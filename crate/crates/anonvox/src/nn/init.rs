//! Seeded parameter initializers.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform(-bound, bound) matrix.
pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f32) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// The usual fan-in scaled uniform init for linear / recurrent weights.
pub fn fan_in(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f32> {
    let bound = (1.0 / rows as f32).sqrt();
    uniform(rng, rows, cols, bound)
}

pub fn zeros(rows: usize, cols: usize) -> Array2<f32> {
    Array2::zeros((rows, cols))
}

pub fn ones(rows: usize, cols: usize) -> Array2<f32> {
    Array2::ones((rows, cols))
}
