//! Frame-level log-mel features.

use ndarray::Array2;
use rustfft::num_complex::Complex32;
use rustfft::FftPlanner;
use thiserror::Error;

/// Log floor applied to mel powers: ln(1e-10).
pub const LOG_FLOOR: f32 = -23.025851;
const POWER_FLOOR: f32 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("waveform of {n_samples} samples is shorter than one frame ({frame_length})")]
    TooShort { n_samples: usize, frame_length: usize },
    #[error("invalid feature config: {0}")]
    BadConfig(String),
}

/// A [n_frames x n_features] matrix of log-mel values.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    pub frames: Array2<f32>,
    pub frame_length: usize,
    pub hop_length: usize,
}

impl FeatureSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn n_features(&self) -> usize {
        self.frames.dim().1
    }
}

fn hz_to_mel(f: f32) -> f32 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f32) -> f32 {
    700.0 * (10f32.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over [0, sr/2]: `n_features` rows of FFT-bin
/// weights.
fn mel_filterbank(n_features: usize, fft_size: usize, sample_rate: u32) -> Array2<f32> {
    let n_bins = fft_size / 2 + 1;
    let max_mel = hz_to_mel(sample_rate as f32 / 2.0);
    let centers: Vec<f32> = (0..n_features + 2)
        .map(|i| mel_to_hz(max_mel * i as f32 / (n_features + 1) as f32))
        .collect();
    let mut bank = Array2::zeros((n_features, n_bins));
    let bin_hz = sample_rate as f32 / fft_size as f32;
    for m in 0..n_features {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for b in 0..n_bins {
            let f = b as f32 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            bank[[m, b]] = w;
        }
    }
    bank
}

/// Extract log-mel frames. Frame count follows
/// `1 + floor((n_samples - frame_length) / hop_length)`.
pub fn extract_features(
    waveform: &[f32],
    sample_rate: u32,
    frame_length: usize,
    hop_length: usize,
    n_features: usize,
) -> Result<FeatureSequence, FeatureError> {
    if frame_length == 0 || hop_length == 0 || n_features == 0 {
        return Err(FeatureError::BadConfig(
            "frame_length, hop_length and n_features must be positive".into(),
        ));
    }
    if waveform.len() < frame_length {
        return Err(FeatureError::TooShort {
            n_samples: waveform.len(),
            frame_length,
        });
    }
    let n_frames = 1 + (waveform.len() - frame_length) / hop_length;
    let fft_size = frame_length.next_power_of_two();
    let bank = mel_filterbank(n_features, fft_size, sample_rate);
    let window: Vec<f32> = (0..frame_length)
        .map(|i| {
            0.5 - 0.5 * (2.0 * std::f32::consts::PI * i as f32 / (frame_length - 1) as f32).cos()
        })
        .collect();
    let fft = FftPlanner::<f32>::new().plan_fft_forward(fft_size);

    let mut frames = Array2::zeros((n_frames, n_features));
    let mut buf = vec![Complex32::default(); fft_size];
    for t in 0..n_frames {
        let start = t * hop_length;
        for (i, c) in buf.iter_mut().enumerate() {
            let s = if i < frame_length {
                waveform[start + i] * window[i]
            } else {
                0.0
            };
            *c = Complex32::new(s, 0.0);
        }
        fft.process(&mut buf);
        let n_bins = fft_size / 2 + 1;
        for m in 0..n_features {
            let mut power = 0.0;
            for b in 0..n_bins {
                let w = bank[[m, b]];
                if w > 0.0 {
                    power += w * buf[b].norm_sqr();
                }
            }
            frames[[t, m]] = power.max(POWER_FLOOR).ln();
        }
    }
    Ok(FeatureSequence {
        frames,
        frame_length,
        hop_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        let wave = vec![0.1f32; 400];
        let f = extract_features(&wave, 16000, 400, 160, 40).unwrap();
        assert_eq!(f.n_frames(), 1);
        let wave = vec![0.1f32; 1000];
        let f = extract_features(&wave, 16000, 400, 160, 40).unwrap();
        assert_eq!(f.n_frames(), 1 + (1000 - 400) / 160);
    }

    #[test]
    fn silence_hits_the_log_floor() {
        let wave = vec![0.0f32; 800];
        let f = extract_features(&wave, 8000, 200, 80, 40).unwrap();
        for &v in f.frames.iter() {
            assert_eq!(v, LOG_FLOOR);
        }
    }

    #[test]
    fn deterministic() {
        let wave: Vec<f32> = (0..1600).map(|i| (i as f32 * 0.05).sin() * 0.5).collect();
        let a = extract_features(&wave, 8000, 200, 80, 40).unwrap();
        let b = extract_features(&wave, 8000, 200, 80, 40).unwrap();
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn too_short_errors() {
        let wave = vec![0.0f32; 399];
        match extract_features(&wave, 16000, 400, 160, 40) {
            Err(FeatureError::TooShort { n_samples, frame_length }) => {
                assert_eq!(n_samples, 399);
                assert_eq!(frame_length, 400);
            }
            other => panic!("expected TooShort, got {other:?}"),
        }
    }

    #[test]
    fn tone_energy_lands_in_matching_band() {
        // 1 kHz tone at 8 kHz: energy should peak well above the floor.
        let wave: Vec<f32> = (0..2000)
            .map(|i| (2.0 * std::f32::consts::PI * 1000.0 * i as f32 / 8000.0).sin() * 0.5)
            .collect();
        let f = extract_features(&wave, 8000, 200, 80, 40).unwrap();
        let max = f.frames.iter().cloned().fold(f32::MIN, f32::max);
        assert!(max > LOG_FLOOR + 10.0);
        assert!(f.frames.iter().all(|v| v.is_finite()));
    }
}
