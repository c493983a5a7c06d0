//! Deterministic speech-shaped test signals.
//!
//! The toolkit is corpus-agnostic: real use points it at a directory of WAV
//! files. Tests and the desk-scale examples need audio with speech-like
//! spectro-temporal structure (harmonic voicing, syllabic energy modulation,
//! fricative bursts, pauses), which these generators provide reproducibly.

use crate::dsp::Waveform;
use crate::rng::Rng;

/// Speech-shaped utterance: voiced harmonic segments with a wandering pitch
/// and formant-like spectral emphasis, alternating with noise bursts and
/// short silences.
pub fn speech_like(seed: u64, duration_secs: f64, sample_rate: u32) -> Waveform {
    let mut rng = Rng::seed_from(seed);
    let n = (duration_secs * sample_rate as f64).round() as usize;
    let fs = sample_rate as f64;
    let mut out = vec![0.0f64; n];

    // Segment schedule: voiced / fricative / pause.
    let mut pos = 0usize;
    let mut phase = vec![0.0f64; 24];
    while pos < n {
        let kind = rng.uniform();
        if kind < 0.62 {
            // Voiced segment.
            let seg = ((rng.range(0.12, 0.30)) * fs) as usize;
            let f0_start = rng.range(90.0, 220.0);
            let f0_end = (f0_start * rng.range(0.8, 1.25)).clamp(80.0, 260.0);
            let formants = [rng.range(350.0, 900.0), rng.range(1100.0, 2400.0)];
            let amp = rng.range(0.25, 0.6);
            for i in 0..seg.min(n - pos) {
                let t = i as f64 / seg as f64;
                let f0 = f0_start + (f0_end - f0_start) * t;
                // Syllabic onset/offset envelope.
                let env = (std::f64::consts::PI * t).sin().powf(0.7);
                let mut s = 0.0;
                for (h, ph) in phase.iter_mut().enumerate() {
                    let fh = f0 * (h + 1) as f64;
                    if fh > 0.45 * fs {
                        break;
                    }
                    *ph += 2.0 * std::f64::consts::PI * fh / fs;
                    // Harmonic rolloff with two formant peaks.
                    let mut g = 1.0 / (1.0 + (h as f64) * 0.7);
                    for fm in formants {
                        let d = (fh - fm) / 300.0;
                        g += 0.9 / (1.0 + d * d) / (1.0 + h as f64 * 0.1);
                    }
                    s += g * ph.sin();
                }
                out[pos + i] = amp * env * s * 0.2;
            }
            pos += seg;
        } else if kind < 0.85 {
            // Fricative burst: high-passed noise.
            let seg = ((rng.range(0.05, 0.14)) * fs) as usize;
            let amp = rng.range(0.05, 0.18);
            let mut prev = 0.0;
            for i in 0..seg.min(n - pos) {
                let t = i as f64 / seg as f64;
                let env = (std::f64::consts::PI * t).sin();
                let w = rng.normal();
                let hp = w - 0.92 * prev;
                prev = w;
                out[pos + i] = amp * env * hp * 0.5;
            }
            pos += seg;
        } else {
            // Pause.
            pos += ((rng.range(0.03, 0.10)) * fs) as usize;
        }
    }

    // Normalize peak to 0.5.
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let g = 0.5 / peak;
        for v in &mut out {
            *v *= g;
        }
    }
    Waveform::new(out, sample_rate).expect("generated signal is valid")
}

/// Seeded white Gaussian noise at the given RMS level.
pub fn white_noise(seed: u64, n: usize, rms: f64, sample_rate: u32) -> Waveform {
    let mut rng = Rng::seed_from(seed);
    Waveform::new((0..n).map(|_| rng.normal() * rms).collect(), sample_rate)
        .expect("generated signal is valid")
}
