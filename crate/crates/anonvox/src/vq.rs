//! Content encoder and vector-quantization bottleneck.
//!
//! The encoder (one 1-D convolution, then five linear blocks, then a
//! projection) maps feature frames to a latent sequence; quantization snaps
//! each latent vector to its nearest codeword by squared distance, ties going
//! to the lowest index so the lookup is a pure function.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{init, math, Tape, Var};

#[derive(Debug, Error, PartialEq)]
pub enum VqError {
    #[error("shape mismatch: {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Learned embedding table of K codewords of length D.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub embeddings: Array2<f32>,
}

impl Codebook {
    /// Uniform(-1/K, 1/K) initialization.
    pub fn init(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            embeddings: init::uniform(rng, k, d, 1.0 / k as f32),
        }
    }

    pub fn k(&self) -> usize {
        self.embeddings.dim().0
    }

    pub fn d(&self) -> usize {
        self.embeddings.dim().1
    }
}

/// Encoder output frames (T x D).
#[derive(Debug, Clone)]
pub struct LatentSequence {
    pub vectors: Array2<f32>,
}

/// Nearest-codeword assignment of a latent sequence.
#[derive(Debug, Clone)]
pub struct QuantizedSequence {
    pub indices: Vec<usize>,
    /// One-hot posterior rows, [T x K].
    pub one_hot: Array2<f32>,
    /// Looked-up codewords, [T x D]; row t equals `embeddings[indices[t]]`.
    pub codewords: Array2<f32>,
}

/// Nearest-neighbour lookup: `indices[t] = argmin_k ||z_e[t] - e_k||^2`,
/// lowest index on ties.
pub fn quantize(z_e: &LatentSequence, codebook: &Codebook) -> Result<QuantizedSequence, VqError> {
    let d = z_e.vectors.dim().1;
    if d != codebook.d() {
        return Err(VqError::Shape {
            context: "quantize: latent width vs codebook D",
            expected: codebook.d(),
            got: d,
        });
    }
    let t_len = z_e.vectors.dim().0;
    let k = codebook.k();
    let mut indices = Vec::with_capacity(t_len);
    let mut one_hot = Array2::zeros((t_len, k));
    let mut codewords = Array2::zeros((t_len, d));
    for t in 0..t_len {
        let row = z_e.vectors.row(t);
        let mut best = (0usize, f32::INFINITY);
        for (ki, code) in codebook.embeddings.rows().into_iter().enumerate() {
            let mut dist = 0.0;
            for (a, b) in row.iter().zip(code.iter()) {
                let diff = a - b;
                dist += diff * diff;
            }
            if dist < best.1 {
                best = (ki, dist);
            }
        }
        indices.push(best.0);
        one_hot[[t, best.0]] = 1.0;
        codewords.row_mut(t).assign(&codebook.embeddings.row(best.0));
    }
    Ok(QuantizedSequence {
        indices,
        one_hot,
        codewords,
    })
}

/// Codebook and commitment losses: sum over D, mean over T.
/// `codebook_loss = mean_t ||sg(z_e) - z_q||^2`,
/// `commitment_loss = mean_t ||z_e - sg(z_q)||^2`; the stop-gradients only
/// matter on the training tape, the values coincide.
pub fn vq_losses(z_e: &Array2<f32>, z_q: &Array2<f32>) -> Result<(f32, f32), VqError> {
    if z_e.dim() != z_q.dim() {
        return Err(VqError::Shape {
            context: "vq_losses: z_e vs z_q rows*cols",
            expected: z_e.len(),
            got: z_q.len(),
        });
    }
    let t_len = z_e.dim().0 as f32;
    let sq = (z_e - z_q).mapv(|x| x * x).sum() / t_len;
    Ok((sq, sq))
}

/// Configuration of the content encoder.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub in_features: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_dim: usize,
    pub n_blocks: usize,
}

/// Convolution front end plus a stack of linear blocks.
#[derive(Debug, Clone)]
pub struct ContentEncoder {
    pub cfg: EncoderConfig,
    pub conv_w: Array2<f32>,
    pub conv_b: Array2<f32>,
    pub blocks: Vec<(Array2<f32>, Array2<f32>)>,
    pub proj_w: Array2<f32>,
    pub proj_b: Array2<f32>,
}

impl ContentEncoder {
    pub fn init(cfg: EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let conv_in = cfg.kernel * cfg.in_features;
        Self {
            cfg,
            conv_w: init::fan_in(rng, conv_in, cfg.width),
            conv_b: init::zeros(1, cfg.width),
            blocks: (0..cfg.n_blocks)
                .map(|_| (init::fan_in(rng, cfg.width, cfg.width), init::zeros(1, cfg.width)))
                .collect(),
            proj_w: init::fan_in(rng, cfg.width, cfg.out_dim),
            proj_b: init::zeros(1, cfg.out_dim),
        }
    }

    /// All-zero parameters (zero weights and biases give all-zero output).
    pub fn zeros(cfg: EncoderConfig) -> Self {
        let conv_in = cfg.kernel * cfg.in_features;
        Self {
            cfg,
            conv_w: init::zeros(conv_in, cfg.width),
            conv_b: init::zeros(1, cfg.width),
            blocks: (0..cfg.n_blocks)
                .map(|_| (init::zeros(cfg.width, cfg.width), init::zeros(1, cfg.width)))
                .collect(),
            proj_w: init::zeros(cfg.width, cfg.out_dim),
            proj_b: init::zeros(1, cfg.out_dim),
        }
    }

    /// Output frame count for an input of `t_in` frames.
    pub fn out_frames(&self, t_in: usize) -> usize {
        math::im2col_indices(t_in, self.cfg.kernel, self.cfg.stride).0
    }

    /// Deterministic inference pass: features [T, F] -> latents [T_out, D].
    pub fn forward(&self, features: &Array2<f32>) -> Result<LatentSequence, VqError> {
        if features.dim().1 != self.cfg.in_features {
            return Err(VqError::Shape {
                context: "encode: feature width",
                expected: self.cfg.in_features,
                got: features.dim().1,
            });
        }
        let mut h = math::relu_map(&math::conv1d_infer(
            features,
            &self.conv_w,
            &self.conv_b,
            self.cfg.kernel,
            self.cfg.stride,
        ));
        for (w, b) in &self.blocks {
            h = math::relu_map(&(math::matmul(h.view(), w.view()) + &b.row(0)));
        }
        let vectors = math::matmul(h.view(), self.proj_w.view()) + &self.proj_b.row(0);
        Ok(LatentSequence { vectors })
    }

    /// Tape pass over pre-inserted parameter leaves, for joint training.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &EncoderVars, features: Var) -> Var {
        let c = tape.conv1d(features, vars.conv_w, vars.conv_b, self.cfg.kernel, self.cfg.stride);
        let mut h = tape.relu(c);
        for (w, b) in &vars.blocks {
            let a = tape.affine(h, *w, *b);
            h = tape.relu(a);
        }
        tape.affine(h, vars.proj_w, vars.proj_b)
    }

    pub fn params(&self) -> Vec<(&'static str, &Array2<f32>)> {
        let mut out = vec![
            ("encoder.conv_w", &self.conv_w),
            ("encoder.conv_b", &self.conv_b),
        ];
        for (w, b) in &self.blocks {
            out.push(("encoder.block_w", w));
            out.push(("encoder.block_b", b));
        }
        out.push(("encoder.proj_w", &self.proj_w));
        out.push(("encoder.proj_b", &self.proj_b));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f32>> {
        let mut out = vec![&mut self.conv_w, &mut self.conv_b];
        for (w, b) in &mut self.blocks {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.proj_w);
        out.push(&mut self.proj_b);
        out
    }

    /// Insert all parameters as tape leaves.
    pub fn leaves(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            conv_w: tape.leaf(self.conv_w.clone()),
            conv_b: tape.leaf(self.conv_b.clone()),
            blocks: self
                .blocks
                .iter()
                .map(|(w, b)| (tape.leaf(w.clone()), tape.leaf(b.clone())))
                .collect(),
            proj_w: tape.leaf(self.proj_w.clone()),
            proj_b: tape.leaf(self.proj_b.clone()),
        }
    }
}

pub struct EncoderVars {
    pub conv_w: Var,
    pub conv_b: Var,
    pub blocks: Vec<(Var, Var)>,
    pub proj_w: Var,
    pub proj_b: Var,
}

impl EncoderVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.conv_w, self.conv_b];
        for (w, b) in &self.blocks {
            out.push(*w);
            out.push(*b);
        }
        out.push(self.proj_w);
        out.push(self.proj_b);
        out
    }
}

/// Reseed codewords unused by any recent assignment to random encoder
/// outputs, countering dead codes.
pub fn reseed_dead_codes(
    codebook: &mut Codebook,
    usage: &[usize],
    recent_latents: &Array2<f32>,
    rng: &mut ChaCha8Rng,
) -> usize {
    let rows = recent_latents.dim().0;
    if rows == 0 {
        return 0;
    }
    let mut reseeded = 0;
    for (k, &count) in usage.iter().enumerate() {
        if count == 0 {
            let pick = rng.gen_range(0..rows);
            codebook
                .embeddings
                .row_mut(k)
                .assign(&recent_latents.index_axis(Axis(0), pick));
            reseeded += 1;
        }
    }
    reseeded
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn latent(rows: &[[f32; 2]]) -> LatentSequence {
        LatentSequence {
            vectors: Array2::from_shape_vec(
                (rows.len(), 2),
                rows.iter().flatten().cloned().collect(),
            )
            .unwrap(),
        }
    }

    fn codebook(rows: &[[f32; 2]]) -> Codebook {
        Codebook {
            embeddings: Array2::from_shape_vec(
                (rows.len(), 2),
                rows.iter().flatten().cloned().collect(),
            )
            .unwrap(),
        }
    }

    #[test]
    fn exact_codeword_match_has_zero_distance() {
        let cb = codebook(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.5], [0.3, -0.7]]);
        let z = latent(&[[0.3, -0.7]]);
        let q = quantize(&z, &cb).unwrap();
        assert_eq!(q.indices, vec![3]);
        assert_eq!(q.codewords.row(0).to_vec(), vec![0.3, -0.7]);
    }

    #[test]
    fn nearest_neighbour_brute_case() {
        // distances: to (0,0): 0.08, to (1,1): 1.28
        let cb = codebook(&[[0.0, 0.0], [1.0, 1.0]]);
        let q = quantize(&latent(&[[0.2, 0.2]]), &cb).unwrap();
        assert_eq!(q.indices, vec![0]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let cb = codebook(&[[0.0, 0.0], [1.0, 0.0]]);
        let q = quantize(&latent(&[[0.5, 0.0]]), &cb).unwrap();
        assert_eq!(q.indices, vec![0]);
    }

    #[test]
    fn quantize_is_idempotent_and_one_hot_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cb = Codebook::init(9, 4, &mut rng);
        let z = LatentSequence {
            vectors: init::uniform(&mut rng, 12, 4, 0.5),
        };
        let q = quantize(&z, &cb).unwrap();
        for row in q.one_hot.rows() {
            assert_eq!(row.sum(), 1.0);
        }
        let again = quantize(
            &LatentSequence {
                vectors: q.codewords.clone(),
            },
            &cb,
        )
        .unwrap();
        assert_eq!(q.indices, again.indices);
    }

    #[test]
    fn quantize_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let k = rng.gen_range(1..=32);
            let d = rng.gen_range(1..=8);
            let t = rng.gen_range(1..=16);
            let cb = Codebook {
                embeddings: init::uniform(&mut rng, k, d, 1.0),
            };
            let z = LatentSequence {
                vectors: init::uniform(&mut rng, t, d, 1.0),
            };
            let q = quantize(&z, &cb).unwrap();
            for (ti, &got) in q.indices.iter().enumerate() {
                let mut best = (0, f32::INFINITY);
                for ki in 0..k {
                    let dist: f32 = (0..d)
                        .map(|j| {
                            let diff = z.vectors[[ti, j]] - cb.embeddings[[ki, j]];
                            diff * diff
                        })
                        .sum();
                    if dist < best.1 {
                        best = (ki, dist);
                    }
                }
                assert_eq!(got, best.0);
            }
        }
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let cb = codebook(&[[0.0, 0.0]]);
        let z = LatentSequence {
            vectors: Array2::zeros((1, 3)),
        };
        assert!(matches!(quantize(&z, &cb), Err(VqError::Shape { .. })));
    }

    #[test]
    fn vq_loss_values() {
        let a = arr2(&[[0.0f32, 0.0]]);
        let b = arr2(&[[1.0f32, 1.0]]);
        let (cb_loss, commit) = vq_losses(&a, &b).unwrap();
        assert_eq!(cb_loss, 2.0);
        assert_eq!(commit, 2.0);
        let (z, _) = vq_losses(&a, &a).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn vq_loss_scales_quadratically() {
        let a = arr2(&[[0.2f32, -0.4], [0.1, 0.9]]);
        let b = arr2(&[[0.0f32, 0.0], [0.0, 0.0]]);
        let (l1, _) = vq_losses(&a, &b).unwrap();
        let scaled = &a * 3.0;
        let (l9, _) = vq_losses(&scaled, &b).unwrap();
        assert!((l9 - 9.0 * l1).abs() < 1e-5);
    }

    #[test]
    fn encoder_stride_arithmetic() {
        let cfg = EncoderConfig {
            in_features: 40,
            width: 64,
            kernel: 3,
            stride: 2,
            out_dim: 64,
            n_blocks: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let enc = ContentEncoder::init(cfg, &mut rng);
        let feats = init::uniform(&mut rng, 100, 40, 1.0);
        let out = enc.forward(&feats).unwrap();
        assert_eq!(out.vectors.dim(), (50, 64));
    }

    #[test]
    fn zero_params_give_zero_output() {
        let cfg = EncoderConfig {
            in_features: 8,
            width: 16,
            kernel: 3,
            stride: 1,
            out_dim: 4,
            n_blocks: 5,
        };
        let enc = ContentEncoder::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let feats = init::uniform(&mut rng, 10, 8, 1.0);
        let out = enc.forward(&feats).unwrap();
        assert_eq!(out.vectors.dim(), (10, 4));
        assert!(out.vectors.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoder_is_deterministic_and_tape_matches_inference() {
        let cfg = EncoderConfig {
            in_features: 6,
            width: 12,
            kernel: 3,
            stride: 2,
            out_dim: 5,
            n_blocks: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = ContentEncoder::init(cfg, &mut rng);
        let feats = init::uniform(&mut rng, 9, 6, 1.0);
        let a = enc.forward(&feats).unwrap();
        let b = enc.forward(&feats).unwrap();
        assert_eq!(a.vectors, b.vectors);

        let mut tape = Tape::new();
        let vars = enc.leaves(&mut tape);
        let fv = tape.leaf(feats.clone());
        let out = enc.forward_tape(&mut tape, &vars, fv);
        let diff = (tape.value(out) - &a.vectors).mapv(f32::abs).sum();
        assert!(diff < 1e-5);
    }

    #[test]
    fn feature_width_mismatch_errors() {
        let cfg = EncoderConfig {
            in_features: 6,
            width: 12,
            kernel: 3,
            stride: 1,
            out_dim: 5,
            n_blocks: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let enc = ContentEncoder::init(cfg, &mut rng);
        let feats = Array2::zeros((4, 7));
        assert!(matches!(enc.forward(&feats), Err(VqError::Shape { .. })));
    }

    #[test]
    fn dead_codes_are_reseeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cb = Codebook::init(4, 2, &mut rng);
        let before = cb.embeddings.clone();
        let latents = arr2(&[[5.0f32, 5.0], [6.0, 6.0]]);
        let usage = vec![3, 0, 1, 0];
        let n = reseed_dead_codes(&mut cb, &usage, &latents, &mut rng);
        assert_eq!(n, 2);
        assert_eq!(cb.embeddings.row(0), before.row(0));
        assert_eq!(cb.embeddings.row(2), before.row(2));
        assert!(cb.embeddings[[1, 0]] >= 5.0);
        assert!(cb.embeddings[[3, 0]] >= 5.0);
    }
}
