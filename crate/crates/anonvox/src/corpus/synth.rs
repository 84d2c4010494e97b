//! Deterministic voice rendering: harmonic source at the speaker's F0 shaped
//! by per-token formant pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, CorpusSpec, Gender, VoiceProfile, CROSSFADE_MS, TOKEN_MS};

/// Vocal-tract formant multiplier range per speaker.
const TRACT_SCALE: (f32, f32) = (0.9, 1.1);
/// Gaussian bandwidth of each formant, Hz.
const FORMANT_BW: f32 = 140.0;
/// Spectral-tilt base giving the fundamental some energy.
const TILT_GAIN: f32 = 0.15;
const TILT_DECAY_HZ: f32 = 800.0;
/// Harmonics above this fraction of the sample rate are dropped.
const CUTOFF_FRACTION: f32 = 0.45;
/// Peak amplitude of a normalized utterance.
const PEAK: f32 = 0.5;

/// First/second formant centers for a token id (Hz, unscaled). Twelve tokens
/// tile a 3x4 grid; larger vocabularies shift by a small per-cycle offset.
pub fn token_formants(token: usize) -> (f32, f32) {
    let cycle = (token / 12) as f32;
    let f1 = 400.0 + 300.0 * (token % 3) as f32 + 17.0 * cycle;
    let f2 = 1300.0 + 500.0 * ((token / 3) % 4) as f32 + 31.0 * cycle;
    (f1, f2)
}

/// Fixed per-speaker voices: even indices female, odd male, F0 uniform in the
/// gender band, vocal-tract scale uniform in [0.9, 1.1].
pub fn speaker_profiles(spec: &CorpusSpec) -> Vec<VoiceProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, u64::MAX));
    (0..spec.n_speakers)
        .map(|i| {
            let gender = if i % 2 == 0 { Gender::F } else { Gender::M };
            let (lo, hi) = match gender {
                Gender::F => spec.female_f0,
                Gender::M => spec.male_f0,
            };
            VoiceProfile {
                speaker_id: format!("spk{i:03}"),
                gender,
                f0: rng.gen_range(lo..=hi),
                tract_scale: rng.gen_range(TRACT_SCALE.0..=TRACT_SCALE.1),
            }
        })
        .collect()
}

/// Harmonic amplitude for frequency `f` under a token's scaled formants.
fn envelope(f: f32, f1: f32, f2: f32) -> f32 {
    let g = |c: f32| (-((f - c) * (f - c)) / (2.0 * FORMANT_BW * FORMANT_BW)).exp();
    g(f1) + g(f2) + TILT_GAIN * (-f / TILT_DECAY_HZ).exp()
}

/// Draw a token sequence and render the waveform for one utterance.
/// Pure in (spec, profile, utterance seed).
pub fn render_utterance(
    spec: &CorpusSpec,
    profile: &VoiceProfile,
    utt_seed: u64,
) -> (Vec<usize>, Vec<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(utt_seed);
    let (lo, hi) = spec.tokens_per_utterance;
    let n_tokens = rng.gen_range(lo..=hi);
    let tokens: Vec<usize> = (0..n_tokens)
        .map(|_| rng.gen_range(0..spec.token_vocab_size))
        .collect();
    let waveform = render_tokens(spec.sample_rate, profile, &tokens);
    (tokens, waveform)
}

/// Render a fixed token sequence for a voice profile.
pub fn render_tokens(sample_rate: u32, profile: &VoiceProfile, tokens: &[usize]) -> Vec<f32> {
    let sr = sample_rate as f32;
    let token_len = (TOKEN_MS / 1000.0 * sr).round() as usize;
    let fade = (CROSSFADE_MS / 1000.0 * sr).round() as usize;
    let step = token_len - fade;
    let total = token_len + step * (tokens.len() - 1);
    let cutoff = CUTOFF_FRACTION * sr;
    let max_harmonic = (cutoff / profile.f0).floor() as usize;

    let mut out = vec![0.0f64; total];
    for (pos, &token) in tokens.iter().enumerate() {
        let start = pos * step;
        let (f1, f2) = token_formants(token);
        let (f1, f2) = (f1 * profile.tract_scale, f2 * profile.tract_scale);
        for k in 1..=max_harmonic {
            let f = k as f32 * profile.f0;
            let amp = envelope(f, f1, f2) as f64;
            if amp < 1e-4 {
                continue;
            }
            // Complex-rotation oscillator on the utterance-global clock so a
            // harmonic stays phase-coherent across token boundaries.
            let omega = 2.0 * std::f64::consts::PI * f as f64 / sr as f64;
            let (rot_c, rot_s) = (omega.cos(), omega.sin());
            let phase0 = omega * start as f64;
            let (mut c, mut s) = (phase0.cos(), phase0.sin());
            for i in 0..token_len {
                let w = window(i, token_len, fade);
                out[start + i] += amp * w * s;
                let (nc, ns) = (c * rot_c - s * rot_s, c * rot_s + s * rot_c);
                c = nc;
                s = ns;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { PEAK as f64 / peak } else { 0.0 };
    out.iter().map(|&v| (v * scale) as f32).collect()
}

/// Trapezoid token window: linear ramps of `fade` samples at both ends.
fn window(i: usize, len: usize, fade: usize) -> f64 {
    if i < fade {
        i as f64 / fade as f64
    } else if i >= len - fade {
        (len - 1 - i) as f64 / fade as f64
    } else {
        1.0
    }
}
