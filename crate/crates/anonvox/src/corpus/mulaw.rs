//! 8-bit mu-law companding.
//!
//! Encoding follows `level = clamp(floor((F(x)+1)/2 * 256), 0, 255)` with
//! `F(x) = sign(x) * ln(1 + mu*|x|) / ln(1 + mu)`. Decoding returns the
//! midpoint of the level's bin in sample space, which keeps the worst-case
//! round-trip error at exactly half the local bin width.

use thiserror::Error;

pub const DEFAULT_MU: u32 = 255;
/// Number of quantization levels.
pub const LEVELS: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum MulawError {
    #[error("mu-law input {0} outside [-1, 1]")]
    SampleOutOfRange(f32),
    #[error("mu-law level {0} outside [0, 255]")]
    LevelOutOfRange(i64),
}

fn compress(x: f32, mu: u32) -> f32 {
    let mu = mu as f32;
    x.signum() * (1.0 + mu * x.abs()).ln() / (1.0 + mu).ln()
}

fn expand(y: f32, mu: u32) -> f32 {
    let mu = mu as f32;
    y.signum() * ((1.0 + mu).powf(y.abs()) - 1.0) / mu
}

/// Quantize a sample in [-1, 1] to a level in [0, 255].
pub fn mulaw_encode(x: f32, mu: u32) -> Result<u8, MulawError> {
    if !x.is_finite() || x.abs() > 1.0 {
        return Err(MulawError::SampleOutOfRange(x));
    }
    let level = (((compress(x, mu) + 1.0) / 2.0) * LEVELS as f32).floor();
    Ok(level.clamp(0.0, (LEVELS - 1) as f32) as u8)
}

/// Reconstruct the bin-midpoint sample for a level in [0, 255].
pub fn mulaw_decode(level: i64, mu: u32) -> Result<f32, MulawError> {
    if !(0..LEVELS as i64).contains(&level) {
        return Err(MulawError::LevelOutOfRange(level));
    }
    let (lo, hi) = bin_edges(level as usize, mu);
    Ok((lo + hi) / 2.0)
}

/// Sample-space edges [lo, hi] of a level's bin.
pub fn bin_edges(level: usize, mu: u32) -> (f32, f32) {
    let y_lo = 2.0 * level as f32 / LEVELS as f32 - 1.0;
    let y_hi = 2.0 * (level + 1) as f32 / LEVELS as f32 - 1.0;
    (expand(y_lo, mu), expand(y_hi, mu))
}

/// Encode a whole waveform; out-of-range samples are clamped first (the
/// vocoder's targets come from already-validated utterances).
pub fn encode_waveform(samples: &[f32], mu: u32) -> Vec<u8> {
    samples
        .iter()
        .map(|&s| mulaw_encode(s.clamp(-1.0, 1.0), mu).expect("clamped sample"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_zero_is_128() {
        // F(0) = 0, so floor((0+1)/2 * 256) = 128.
        assert_eq!(mulaw_encode(0.0, DEFAULT_MU).unwrap(), 128);
    }

    #[test]
    fn encode_boundaries_clamp() {
        assert_eq!(mulaw_encode(1.0, DEFAULT_MU).unwrap(), 255);
        assert_eq!(mulaw_encode(-1.0, DEFAULT_MU).unwrap(), 0);
    }

    #[test]
    fn out_of_range_inputs_error() {
        assert!(mulaw_encode(1.0001, DEFAULT_MU).is_err());
        assert!(mulaw_encode(f32::NAN, DEFAULT_MU).is_err());
        assert!(mulaw_decode(-1, DEFAULT_MU).is_err());
        assert!(mulaw_decode(256, DEFAULT_MU).is_err());
    }

    #[test]
    fn round_trip_near_zero() {
        let x = mulaw_decode(mulaw_encode(0.0, DEFAULT_MU).unwrap() as i64, DEFAULT_MU).unwrap();
        assert!(x.abs() <= 1e-4, "decode(encode(0)) = {x}");
    }

    #[test]
    fn top_bin_is_near_full_scale() {
        // Bin 255 spans roughly [0.957, 1.0]; its midpoint is ~0.979.
        let x = mulaw_decode(255, DEFAULT_MU).unwrap();
        assert!(x > 0.95 && x <= 1.0, "decode(255) = {x}");
        let (lo, hi) = bin_edges(255, DEFAULT_MU);
        assert!((x - (lo + hi) / 2.0).abs() < 1e-7);
        assert!((hi - 1.0).abs() < 1e-6);
    }

    #[test]
    fn round_trip_error_within_half_local_bin() {
        for k in 0..1000 {
            let x = -1.0 + 2.0 * k as f32 / 999.0;
            let level = mulaw_encode(x, DEFAULT_MU).unwrap();
            let rec = mulaw_decode(level as i64, DEFAULT_MU).unwrap();
            let (lo, hi) = bin_edges(level as usize, DEFAULT_MU);
            let half = (hi - lo) / 2.0;
            assert!(
                (rec - x).abs() <= half + 1e-6,
                "x={x}: err {} > half bin {half}",
                (rec - x).abs()
            );
        }
    }

    #[test]
    fn encode_of_decode_is_identity() {
        for level in 0..256i64 {
            let x = mulaw_decode(level, DEFAULT_MU).unwrap();
            assert_eq!(mulaw_encode(x, DEFAULT_MU).unwrap() as i64, level);
        }
    }

    proptest! {
        #[test]
        fn encode_is_monotone(a in -1.0f32..1.0, b in -1.0f32..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ea = mulaw_encode(lo, DEFAULT_MU).unwrap();
            let eb = mulaw_encode(hi, DEFAULT_MU).unwrap();
            prop_assert!(ea <= eb);
        }

        #[test]
        fn decode_stays_in_range(level in 0i64..256) {
            let x = mulaw_decode(level, DEFAULT_MU).unwrap();
            prop_assert!((-1.0..=1.0).contains(&x));
        }
    }
}
