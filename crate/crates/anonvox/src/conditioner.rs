//! Attribute embedding tables (gender, speaker) and the recurrent network
//! fusing them with quantized content.
//!
//! Gender conditioning concatenates the gender row to every content frame and
//! runs one bi-directional recurrent layer. Identity conditioning augments
//! that: the speaker row is projected to 2H, concatenated with the first
//! layer's output (giving exactly 4H input channels), and passed through a
//! second bi-directional layer. Both paths emit 2H channels per frame.

use ndarray::{Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::Gender;
use crate::nn::{init, BiGru, BiGruVars, Tape, Var};

/// Speaker embedding width; fixed at 64.
pub const SPEAKER_EMBED_WIDTH: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ConditionError {
    #[error("speaker `{0}` is not enrolled")]
    UnknownSpeaker(String),
    #[error("shape mismatch: {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid conditioner config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConditionerConfig {
    /// Codeword width D.
    pub code_dim: usize,
    /// Gender embedding width.
    pub gender_dim: usize,
    /// Recurrent hidden width H; both paths emit 2H channels.
    pub hidden: usize,
    /// Width the speaker embedding is projected to before the second layer.
    pub speaker_proj_width: usize,
    /// Permit second-layer input widths other than 4H.
    pub allow_channel_mismatch: bool,
}

impl ConditionerConfig {
    /// Second recurrent layer input channels: first-layer output (2H)
    /// concatenated with the projected speaker embedding.
    pub fn second_layer_input(&self) -> usize {
        2 * self.hidden + self.speaker_proj_width
    }

    /// Rejects configurations where the identity path would not see exactly
    /// four times the hidden width, unless explicitly overridden.
    pub fn validate(&self) -> Result<(), ConditionError> {
        if self.code_dim == 0 || self.gender_dim == 0 || self.hidden == 0 {
            return Err(ConditionError::BadConfig(
                "code_dim, gender_dim and hidden must be positive".into(),
            ));
        }
        if self.second_layer_input() != 4 * self.hidden && !self.allow_channel_mismatch {
            return Err(ConditionError::BadConfig(format!(
                "second-layer input {} != 4H = {}; set allow_channel_mismatch to override",
                self.second_layer_input(),
                4 * self.hidden
            )));
        }
        Ok(())
    }
}

/// How a conditioned sequence was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningMode {
    GenderOnly,
    GenderPlusIdentity,
}

/// Decoder input frames, [T x 2H].
#[derive(Debug, Clone)]
pub struct ConditionedSequence {
    pub frames: Array2<f32>,
    pub mode: ConditioningMode,
}

/// Embedding tables plus the stacked bi-directional conditioning network.
#[derive(Debug, Clone)]
pub struct Conditioner {
    pub cfg: ConditionerConfig,
    /// Row 0 = F, row 1 = M.
    pub gender_table: Array2<f32>,
    /// One row per enrolled speaker, ordered by `speaker_ids`.
    pub speaker_table: Array2<f32>,
    /// Lexicographically sorted speaker ids; row index = position here.
    pub speaker_ids: Vec<String>,
    pub proj_w: Array2<f32>,
    pub proj_b: Array2<f32>,
    pub gru1: BiGru,
    pub gru2: BiGru,
}

impl Conditioner {
    pub fn init(
        cfg: ConditionerConfig,
        mut speaker_ids: Vec<String>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ConditionError> {
        cfg.validate()?;
        speaker_ids.sort();
        let n = speaker_ids.len();
        Ok(Self {
            cfg,
            gender_table: init::uniform(rng, 2, cfg.gender_dim, 0.5),
            speaker_table: init::uniform(rng, n, SPEAKER_EMBED_WIDTH, 0.5),
            speaker_ids,
            proj_w: init::fan_in(rng, SPEAKER_EMBED_WIDTH, cfg.speaker_proj_width),
            proj_b: init::zeros(1, cfg.speaker_proj_width),
            gru1: BiGru::init(cfg.code_dim + cfg.gender_dim, cfg.hidden, rng),
            gru2: BiGru::init(cfg.second_layer_input(), cfg.hidden, rng),
        })
    }

    /// Channels of the conditioned output (both modes): 2H.
    pub fn out_channels(&self) -> usize {
        2 * self.cfg.hidden
    }

    pub fn speaker_index(&self, speaker_id: &str) -> Result<usize, ConditionError> {
        self.speaker_ids
            .iter()
            .position(|s| s == speaker_id)
            .ok_or_else(|| ConditionError::UnknownSpeaker(speaker_id.to_string()))
    }

    /// Stored gender row (F = row 0, M = row 1).
    pub fn lookup_gender(&self, gender: Gender) -> ArrayView1<'_, f32> {
        self.gender_table.row(gender.index())
    }

    /// Stored speaker row; unknown speakers are an enrollment error.
    pub fn lookup_speaker(&self, speaker_id: &str) -> Result<ArrayView1<'_, f32>, ConditionError> {
        Ok(self.speaker_table.row(self.speaker_index(speaker_id)?))
    }

    /// First-layer input: every frame is the content row concatenated with
    /// the same gender embedding (conditioning is time-invariant).
    pub(crate) fn assemble_gender_input(
        &self,
        z_q: &Array2<f32>,
        gender: Gender,
    ) -> Array2<f32> {
        let (t_len, d) = z_q.dim();
        let g = self.lookup_gender(gender);
        let mut input = Array2::zeros((t_len, d + self.cfg.gender_dim));
        for t in 0..t_len {
            input.slice_mut(ndarray::s![t, ..d]).assign(&z_q.row(t));
            input.slice_mut(ndarray::s![t, d..]).assign(&g);
        }
        input
    }

    /// Fuse quantized content with the gender row and, when a speaker is
    /// given, the projected speaker row through the second layer.
    pub fn condition(
        &self,
        z_q: &Array2<f32>,
        gender: Gender,
        speaker_id: Option<&str>,
    ) -> Result<ConditionedSequence, ConditionError> {
        if z_q.dim().1 != self.cfg.code_dim {
            return Err(ConditionError::Shape {
                context: "condition: z_q width vs code_dim",
                expected: self.cfg.code_dim,
                got: z_q.dim().1,
            });
        }
        let out1 = self.gru1.scan(&self.assemble_gender_input(z_q, gender));
        let Some(speaker_id) = speaker_id else {
            return Ok(ConditionedSequence {
                frames: out1,
                mode: ConditioningMode::GenderOnly,
            });
        };
        let spk = self.lookup_speaker(speaker_id)?.insert_axis(ndarray::Axis(0)).to_owned();
        let proj = crate::nn::math::matmul(spk.view(), self.proj_w.view()) + &self.proj_b.row(0);
        let t_len = out1.dim().0;
        let mut input2 = Array2::zeros((t_len, self.cfg.second_layer_input()));
        for t in 0..t_len {
            input2
                .slice_mut(ndarray::s![t, ..2 * self.cfg.hidden])
                .assign(&out1.row(t));
            input2
                .slice_mut(ndarray::s![t, 2 * self.cfg.hidden..])
                .assign(&proj.row(0));
        }
        Ok(ConditionedSequence {
            frames: self.gru2.scan(&input2),
            mode: ConditioningMode::GenderPlusIdentity,
        })
    }

    /// Tape-side conditioning over a content var (usually the
    /// straight-through decoder input).
    pub fn condition_tape(
        &self,
        tape: &mut Tape,
        vars: &ConditionerVars,
        z_q: Var,
        gender: Gender,
        speaker_row: Option<usize>,
    ) -> Var {
        let t_len = tape.value(z_q).dim().0;
        let g_rows = tape.gather_rows(vars.gender_table, vec![Some(gender.index()); t_len]);
        let input1 = tape.concat_cols(z_q, g_rows);
        let out1 = vars.gru1.scan_tape(tape, input1);
        let Some(row) = speaker_row else {
            return out1;
        };
        let spk = tape.gather_rows(vars.speaker_table, vec![Some(row)]);
        let proj = tape.affine(spk, vars.proj_w, vars.proj_b);
        let proj_rows = tape.gather_rows(proj, vec![Some(0); t_len]);
        let input2 = tape.concat_cols(out1, proj_rows);
        vars.gru2.scan_tape(tape, input2)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f32>> {
        let mut p = vec![
            &mut self.gender_table,
            &mut self.speaker_table,
            &mut self.proj_w,
            &mut self.proj_b,
        ];
        p.extend(self.gru1.params_mut());
        p.extend(self.gru2.params_mut());
        p
    }

    pub fn leaves(&self, tape: &mut Tape) -> ConditionerVars {
        ConditionerVars {
            gender_table: tape.leaf(self.gender_table.clone()),
            speaker_table: tape.leaf(self.speaker_table.clone()),
            proj_w: tape.leaf(self.proj_w.clone()),
            proj_b: tape.leaf(self.proj_b.clone()),
            gru1: self.gru1.leaves(tape),
            gru2: self.gru2.leaves(tape),
        }
    }
}

pub struct ConditionerVars {
    pub gender_table: Var,
    pub speaker_table: Var,
    pub proj_w: Var,
    pub proj_b: Var,
    pub gru1: BiGruVars,
    pub gru2: BiGruVars,
}

impl ConditionerVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![self.gender_table, self.speaker_table, self.proj_w, self.proj_b];
        v.extend(self.gru1.all());
        v.extend(self.gru2.all());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg(code_dim: usize, gender_dim: usize, hidden: usize) -> ConditionerConfig {
        ConditionerConfig {
            code_dim,
            gender_dim,
            hidden,
            speaker_proj_width: 2 * hidden,
            allow_channel_mismatch: false,
        }
    }

    fn build(code_dim: usize, gender_dim: usize, hidden: usize) -> Conditioner {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        Conditioner::init(
            cfg(code_dim, gender_dim, hidden),
            vec!["spk001".into(), "spk000".into()],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn gender_lookup_order_is_fixed() {
        let c = build(4, 3, 5);
        assert_eq!(c.lookup_gender(Gender::F), c.gender_table.row(0));
        assert_eq!(c.lookup_gender(Gender::M), c.gender_table.row(1));
    }

    #[test]
    fn speaker_rows_are_lexicographic_and_width_64() {
        let c = build(4, 3, 5);
        assert_eq!(c.speaker_ids, vec!["spk000".to_string(), "spk001".to_string()]);
        for id in &c.speaker_ids {
            assert_eq!(c.lookup_speaker(id).unwrap().len(), SPEAKER_EMBED_WIDTH);
        }
    }

    #[test]
    fn unknown_speaker_is_enrollment_error() {
        let c = build(4, 3, 5);
        assert_eq!(
            c.lookup_speaker("ghost"),
            Err(ConditionError::UnknownSpeaker("ghost".into()))
        );
    }

    #[test]
    fn channel_arithmetic_default_preset() {
        // D = 64, D_g = 64, H = 64: first-layer input 128, output 2H = 128.
        let c = build(64, 64, 64);
        let z_q = Array2::zeros((5, 64));
        let input = c.assemble_gender_input(&z_q, Gender::F);
        assert_eq!(input.dim(), (5, 128));
        let out = c.condition(&z_q, Gender::F, None).unwrap();
        assert_eq!(out.frames.dim(), (5, 128));
        assert_eq!(out.mode, ConditioningMode::GenderOnly);
        // Identity path: second layer sees 4H = 256 channels.
        assert_eq!(c.cfg.second_layer_input(), 256);
        let out = c.condition(&z_q, Gender::F, Some("spk000")).unwrap();
        assert_eq!(out.frames.dim(), (5, 128));
        assert_eq!(out.mode, ConditioningMode::GenderPlusIdentity);
    }

    #[test]
    fn frame_count_preserved_in_both_modes() {
        let c = build(4, 3, 5);
        for t in [1usize, 2, 9] {
            let z_q = Array2::from_elem((t, 4), 0.3);
            assert_eq!(c.condition(&z_q, Gender::M, None).unwrap().frames.dim().0, t);
            assert_eq!(
                c.condition(&z_q, Gender::M, Some("spk000")).unwrap().frames.dim().0,
                t
            );
        }
    }

    #[test]
    fn attribute_broadcast_is_time_invariant() {
        let c = build(4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z_q = init::uniform(&mut rng, 6, 4, 1.0);
        let input = c.assemble_gender_input(&z_q, Gender::M);
        let attr0 = input.slice(ndarray::s![0, 4..]).to_owned();
        for t in 1..6 {
            assert_eq!(input.slice(ndarray::s![t, 4..]), attr0);
        }
    }

    #[test]
    fn genders_produce_distinct_outputs() {
        let c = build(4, 3, 5);
        let z_q = Array2::from_elem((4, 4), 0.1);
        let f = c.condition(&z_q, Gender::F, None).unwrap();
        let m = c.condition(&z_q, Gender::M, None).unwrap();
        let diff = (&f.frames - &m.frames).mapv(f32::abs).sum();
        assert!(diff > 1e-4, "gender rows should already be distinct at init");
    }

    #[test]
    fn config_rejects_non_4h_second_layer() {
        let mut bad = cfg(4, 3, 5);
        bad.speaker_proj_width = SPEAKER_EMBED_WIDTH; // 2H + 64 != 4H for H=5
        assert!(bad.validate().is_err());
        bad.allow_channel_mismatch = true;
        assert!(bad.validate().is_ok());
    }

    #[test]
    fn z_q_width_mismatch_is_shape_error() {
        let c = build(4, 3, 5);
        let z_q = Array2::zeros((2, 7));
        assert!(matches!(
            c.condition(&z_q, Gender::F, None),
            Err(ConditionError::Shape { .. })
        ));
    }

    #[test]
    fn tape_condition_matches_plain() {
        let c = build(3, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let z_q = init::uniform(&mut rng, 5, 3, 1.0);
        for speaker in [None, Some("spk001")] {
            let plain = c.condition(&z_q, Gender::M, speaker).unwrap();
            let mut tape = Tape::new();
            let vars = c.leaves(&mut tape);
            let zv = tape.leaf(z_q.clone());
            let row = speaker.map(|s| c.speaker_index(s).unwrap());
            let out = c.condition_tape(&mut tape, &vars, zv, Gender::M, row);
            let diff = (tape.value(out) - &plain.frames).mapv(f32::abs).sum();
            assert!(diff < 1e-4, "tape/plain conditioning diff {diff}");
        }
    }
}
