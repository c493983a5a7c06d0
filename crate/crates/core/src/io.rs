//! WAV ingestion and emission: mono 16 kHz, PCM 16-bit or 32-bit float.
//! Other rates or channel counts are rejected; resampling is out of scope.

use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{DerevError, Result};

pub const REQUIRED_RATE: u32 = 16_000;

pub fn read_wav(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(DerevError::MissingFile(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DerevError::InvalidInput(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_rate != REQUIRED_RATE {
        return Err(DerevError::SampleRateMismatch {
            expected: REQUIRED_RATE,
            got: spec.sample_rate,
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(DerevError::InvalidInput(format!(
                "{}: unsupported format {:?}/{} bits (want PCM16 or float32)",
                path.display(),
                fmt,
                bits
            )))
        }
    };
    Waveform::new(samples, REQUIRED_RATE)
}

/// Write as 32-bit float WAV.
pub fn write_wav(path: &Path, x: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: x.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &x.samples {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Write as 16-bit PCM WAV, clipping to [-1, 1).
pub fn write_wav_pcm16(path: &Path, x: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: x.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &x.samples {
        let v = (s * 32768.0).clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("derev-io-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn float_round_trip() {
        let x = Waveform::new(vec![0.0, 0.25, -0.5, 0.125], 16_000).unwrap();
        let p = tmp("f32.wav");
        write_wav(&p, &x).unwrap();
        let y = read_wav(&p).unwrap();
        for (a, b) in x.samples.iter().zip(y.samples.iter()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn pcm16_round_trip() {
        let x = Waveform::new(vec![0.0, 0.25, -0.5, 0.125], 16_000).unwrap();
        let p = tmp("i16.wav");
        write_wav_pcm16(&p, &x).unwrap();
        let y = read_wav(&p).unwrap();
        for (a, b) in x.samples.iter().zip(y.samples.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn wrong_rate_rejected() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let p = tmp("rate.wav");
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        match read_wav(&p) {
            Err(DerevError::SampleRateMismatch { got: 44_100, .. }) => {}
            other => panic!("expected rate mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_reported() {
        match read_wav(Path::new("/nonexistent/deeply/missing.wav")) {
            Err(DerevError::MissingFile(p)) => {
                assert!(p.to_string_lossy().contains("missing.wav"))
            }
            other => panic!("expected missing file, got {other:?}"),
        }
    }
}
