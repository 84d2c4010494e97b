//! Synthetic labeled toy-speech corpus plus the audio plumbing shared by the
//! rest of the pipeline: WAV I/O, mu-law companding, and log-mel features.
//!
//! Every utterance is rendered deterministically from a seed: each speaker
//! owns a fixed fundamental frequency drawn from its gender band and a fixed
//! vocal-tract scale, and each content token is a fixed pair of formants
//! applied to the speaker's harmonic source. Content, identity and gender are
//! therefore independently controllable (and independently audible).

pub mod features;
pub mod manifest;
pub mod mulaw;
pub mod synth;
pub mod wav;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{extract_features, FeatureSequence};
pub use manifest::{read_manifest, write_manifest, UtteranceMeta};

/// Token duration in milliseconds.
pub const TOKEN_MS: f32 = 100.0;
/// Linear cross-fade between adjacent tokens, milliseconds.
pub const CROSSFADE_MS: f32 = 10.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: field `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("utterance `{id}` violates invariant: {reason}")]
    BadUtterance { id: String, reason: String },
    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("audio file `{path}`: {source}")]
    Audio {
        path: String,
        #[source]
        source: wav::WavError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary speaker gender label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
}

impl Gender {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gender::F => "F",
            Gender::M => "M",
        }
    }

    pub fn parse(s: &str) -> Option<Gender> {
        match s {
            "F" => Some(Gender::F),
            "M" => Some(Gender::M),
            _ => None,
        }
    }

    /// Row index in the gender embedding table (F = 0, M = 1).
    pub fn index(&self) -> usize {
        match self {
            Gender::F => 0,
            Gender::M => 1,
        }
    }
}

impl std::fmt::Display for Gender {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A waveform with its ground-truth labels.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub waveform: Vec<f32>,
    pub sample_rate: u32,
    pub speaker_id: String,
    pub gender: Gender,
    pub tokens: Vec<usize>,
}

impl Utterance {
    /// Checks the type invariants: samples in [-1, 1], tokens non-empty.
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.tokens.is_empty() {
            return Err(CorpusError::BadUtterance {
                id: self.id.clone(),
                reason: "token sequence is empty".into(),
            });
        }
        if let Some(s) = self.waveform.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(CorpusError::BadUtterance {
                id: self.id.clone(),
                reason: format!("sample {s} outside [-1, 1]"),
            });
        }
        Ok(())
    }
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorpusSpec {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub token_vocab_size: usize,
    /// Inclusive [min, max] token count per utterance.
    pub tokens_per_utterance: (usize, usize),
    pub sample_rate: u32,
    pub seed: u64,
    /// Female fundamental-frequency band, Hz.
    pub female_f0: (f32, f32),
    /// Male fundamental-frequency band, Hz.
    pub male_f0: (f32, f32),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            utterances_per_speaker: 50,
            token_vocab_size: 12,
            tokens_per_utterance: (3, 6),
            sample_rate: 16_000,
            seed: 0,
            female_f0: (165.0, 255.0),
            male_f0: (85.0, 155.0),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |field: &'static str, reason: String| CorpusError::InvalidSpec { field, reason };
        if self.n_speakers == 0 || self.n_speakers % 2 != 0 {
            return Err(fail(
                "n_speakers",
                format!("must be even and positive for gender balance, got {}", self.n_speakers),
            ));
        }
        if self.utterances_per_speaker == 0 {
            return Err(fail("utterances_per_speaker", "must be positive".into()));
        }
        if self.token_vocab_size < 2 {
            return Err(fail(
                "token_vocab_size",
                format!("must be at least 2, got {}", self.token_vocab_size),
            ));
        }
        let (lo, hi) = self.tokens_per_utterance;
        if lo < 1 {
            return Err(fail("tokens_per_utterance", "minimum must be at least 1".into()));
        }
        if lo > hi {
            return Err(fail(
                "tokens_per_utterance",
                format!("min {lo} exceeds max {hi}"),
            ));
        }
        if self.sample_rate < 4_000 {
            return Err(fail(
                "sample_rate",
                format!("must be at least 4000 Hz, got {}", self.sample_rate),
            ));
        }
        for (field, (lo, hi)) in [("female_f0", self.female_f0), ("male_f0", self.male_f0)] {
            if !(0.0 < lo && lo < hi && hi < self.sample_rate as f32 / 2.0) {
                return Err(fail(field, format!("band [{lo}, {hi}] is not a valid F0 range")));
            }
        }
        Ok(())
    }
}

/// Fixed per-speaker generator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoiceProfile {
    pub speaker_id: String,
    pub gender: Gender,
    /// Fundamental frequency, Hz; constant for the speaker.
    pub f0: f32,
    /// Multiplier on token formant centers.
    pub tract_scale: f32,
}

/// A generated corpus: utterance metadata in manifest order plus the speaker
/// profiles that produced it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub utterances: Vec<UtteranceMeta>,
    pub speakers: Vec<VoiceProfile>,
}

/// splitmix64-style stream split; `hash(seed, index)` for per-utterance rngs.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x1234_5678_9ABC_DEF1);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate the corpus under `dir`: WAV files in `dir/audio/`, a manifest at
/// `dir/manifest.tsv` and the speaker profiles at `dir/speakers.tsv`.
/// A pure function of the spec: the same spec yields bit-identical output.
pub fn generate_corpus(spec: &CorpusSpec, dir: &Path) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let speakers = synth::speaker_profiles(spec);
    std::fs::create_dir_all(dir.join("audio"))?;

    let plans: Vec<(usize, usize)> = (0..spec.n_speakers)
        .flat_map(|s| (0..spec.utterances_per_speaker).map(move |u| (s, u)))
        .collect();
    let rendered: Vec<(UtteranceMeta, Vec<f32>)> = plans
        .par_iter()
        .map(|&(s, u)| {
            let utt_index = (s * spec.utterances_per_speaker + u) as u64;
            let profile = &speakers[s];
            let (tokens, waveform) =
                synth::render_utterance(spec, profile, derive_seed(spec.seed, utt_index));
            let id = format!("{}_u{:03}", profile.speaker_id, u);
            let meta = UtteranceMeta {
                id: id.clone(),
                relative_path: format!("audio/{id}.wav"),
                speaker_id: profile.speaker_id.clone(),
                gender: profile.gender,
                tokens,
            };
            (meta, waveform)
        })
        .collect();

    for (meta, waveform) in &rendered {
        let path = dir.join(&meta.relative_path);
        wav::write_wav(&path, waveform, spec.sample_rate).map_err(|source| CorpusError::Audio {
            path: path.display().to_string(),
            source,
        })?;
    }
    let utterances: Vec<UtteranceMeta> = rendered.into_iter().map(|(m, _)| m).collect();
    write_manifest(&dir.join("manifest.tsv"), &utterances)?;
    manifest::write_speakers(&dir.join("speakers.tsv"), &speakers)?;
    Ok(Corpus {
        spec: spec.clone(),
        utterances,
        speakers,
    })
}

/// Load one utterance's audio from a corpus directory.
pub fn load_utterance(dir: &Path, meta: &UtteranceMeta) -> Result<Utterance, CorpusError> {
    let path = dir.join(&meta.relative_path);
    let (waveform, sample_rate) =
        wav::read_wav(&path).map_err(|source| CorpusError::Audio {
            path: path.display().to_string(),
            source,
        })?;
    let utt = Utterance {
        id: meta.id.clone(),
        waveform,
        sample_rate,
        speaker_id: meta.speaker_id.clone(),
        gender: meta.gender,
        tokens: meta.tokens.clone(),
    };
    utt.validate()?;
    Ok(utt)
}
