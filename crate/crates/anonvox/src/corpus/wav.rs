//! Mono 16-bit PCM WAV read/write.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error(transparent)]
    Codec(#[from] hound::Error),
    #[error("expected mono 16-bit PCM, got {channels} channels at {bits} bits")]
    UnsupportedFormat { channels: u16, bits: u16 },
}

/// Write samples in [-1, 1] as mono 16-bit PCM.
pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Read a mono 16-bit PCM file back to samples in [-1, 1].
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32), WavError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 {
        return Err(WavError::UnsupportedFormat {
            channels: spec.channels,
            bits: spec.bits_per_sample,
        });
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| (v as f32 / 32767.0).clamp(-1.0, 1.0)))
        .collect::<Result<Vec<f32>, _>>()?;
    Ok((samples, spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_is_within_quantization() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f32> = (0..512).map(|i| ((i as f32) * 0.07).sin() * 0.8).collect();
        write_wav(&path, &samples, 8000).unwrap();
        let (back, sr) = read_wav(&path).unwrap();
        assert_eq!(sr, 8000);
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn written_twice_is_byte_identical() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.wav");
        let p2 = dir.path().join("b.wav");
        let samples: Vec<f32> = (0..100).map(|i| (i as f32 / 100.0) - 0.5).collect();
        write_wav(&p1, &samples, 16000).unwrap();
        write_wav(&p2, &samples, 16000).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }
}
