//! Extended short-time objective intelligibility.
//!
//! Standard recipe: both signals resampled to 10 kHz, silent frames removed
//! by an energy gate on the reference, one-third-octave band magnitudes
//! from a 256-sample Hann / 512-point STFT (15 bands from 150 Hz), then
//! row- and column-normalized correlation over sliding 384 ms segments,
//! averaged over segments. Scores live in [-1, 1].

use crate::dsp::Waveform;
use crate::error::{DerevError, Result};
use crate::fft;

const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const FIRST_CENTER_HZ: f64 = 150.0;
const SEGMENT_FRAMES: usize = 30; // 384 ms at 10 kHz / 128 hop
const DYN_RANGE_DB: f64 = 40.0;
const TARGET_RATE: u32 = 10_000;

/// Modified zeroth-order Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..60 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Polyphase 16 kHz -> 10 kHz resampler (up 5, down 8) with a Kaiser-
/// windowed sinc prototype at the 80 kHz intermediate rate.
pub fn resample_16k_to_10k(x: &Waveform) -> Result<Waveform> {
    if x.sample_rate != 16_000 {
        return Err(DerevError::SampleRateMismatch {
            expected: 16_000,
            got: x.sample_rate,
        });
    }
    const UP: i64 = 5;
    const DOWN: i64 = 8;
    const HALF: i64 = 80; // 10 * DOWN intermediate taps, scipy-style
    const BETA: f64 = 5.0;

    // k[n] = up * (1/8) * sinc(n/8) * kaiser(n)
    let mut kernel = [0.0f64; (2 * HALF + 1) as usize];
    let i0b = bessel_i0(BETA);
    for (i, k) in kernel.iter_mut().enumerate() {
        let n = i as i64 - HALF;
        let t = n as f64 / DOWN as f64;
        let sinc = if n == 0 {
            1.0
        } else {
            (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
        };
        let r = n as f64 / HALF as f64;
        let win = bessel_i0(BETA * (1.0 - r * r).max(0.0).sqrt()) / i0b;
        *k = UP as f64 / DOWN as f64 * sinc * win;
    }

    let out_len = ((x.len() as i64 * UP + DOWN - 1) / DOWN) as usize;
    let mut out = vec![0.0; out_len];
    for (m, o) in out.iter_mut().enumerate() {
        let center = m as i64 * DOWN;
        // contributions from input samples u with |center - u*UP| <= HALF
        let u_lo = (center - HALF).div_euclid(UP);
        let u_hi = (center + HALF).div_euclid(UP);
        let mut acc = 0.0;
        for u in u_lo..=u_hi {
            if u < 0 || u as usize >= x.len() {
                continue;
            }
            let tap = center - u * UP;
            if tap.abs() > HALF {
                continue;
            }
            acc += x.samples[u as usize] * kernel[(tap + HALF) as usize];
        }
        *o = acc;
    }
    Waveform::new(out, TARGET_RATE)
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Drop frames whose reference energy is more than 40 dB below the loudest
/// reference frame; both signals keep the same frame set and are rebuilt by
/// overlap-adding the windowed frames (Hann at 50% overlap sums to one).
fn remove_silent_frames(reference: &[f64], est: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = reference.len().min(est.len());
    let w = hann(FRAME);
    if n < FRAME {
        return (reference[..n].to_vec(), est[..n].to_vec());
    }
    let num_frames = (n - FRAME) / HOP + 1;

    let mut energies_db = Vec::with_capacity(num_frames);
    for f in 0..num_frames {
        let start = f * HOP;
        let e: f64 = (0..FRAME)
            .map(|i| {
                let v = reference[start + i] * w[i];
                v * v
            })
            .sum();
        energies_db.push(10.0 * (e.max(1e-300)).log10());
    }
    let max_db = energies_db.iter().cloned().fold(f64::MIN, f64::max);

    let kept: Vec<usize> = (0..num_frames)
        .filter(|&f| energies_db[f] > max_db - DYN_RANGE_DB)
        .collect();

    let out_len = if kept.is_empty() {
        0
    } else {
        (kept.len() - 1) * HOP + FRAME
    };
    let mut r_out = vec![0.0; out_len];
    let mut e_out = vec![0.0; out_len];
    for (slot, &f) in kept.iter().enumerate() {
        let src = f * HOP;
        let dst = slot * HOP;
        for i in 0..FRAME {
            r_out[dst + i] += reference[src + i] * w[i];
            e_out[dst + i] += est[src + i] * w[i];
        }
    }
    (r_out, e_out)
}

/// One-third-octave band magnitudes: rows are bands, columns frames.
fn band_magnitudes(x: &[f64]) -> Vec<Vec<f64>> {
    let w = hann(FRAME);
    if x.len() < FRAME {
        return vec![Vec::new(); NUM_BANDS];
    }
    let num_frames = (x.len() - FRAME) / HOP + 1;

    // Band edges against FFT bin frequencies.
    let bin_hz = TARGET_RATE as f64 / NFFT as f64;
    let mut band_bins: Vec<(usize, usize)> = Vec::with_capacity(NUM_BANDS);
    for j in 0..NUM_BANDS {
        let cf = FIRST_CENTER_HZ * 2f64.powf(j as f64 / 3.0);
        let lo = cf / 2f64.powf(1.0 / 6.0);
        let hi = cf * 2f64.powf(1.0 / 6.0);
        let lo_bin = (lo / bin_hz).round() as usize;
        let hi_bin = ((hi / bin_hz).round() as usize).min(NFFT / 2);
        band_bins.push((lo_bin, hi_bin.max(lo_bin + 1)));
    }

    let mut bands = vec![vec![0.0; num_frames]; NUM_BANDS];
    let mut frame = vec![0.0; FRAME];
    for f in 0..num_frames {
        let start = f * HOP;
        for i in 0..FRAME {
            frame[i] = x[start + i] * w[i];
        }
        let spec = fft::rfft(&frame, NFFT);
        for (j, &(lo, hi)) in band_bins.iter().enumerate() {
            let e: f64 = spec[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            bands[j][f] = e.sqrt();
        }
    }
    bands
}

fn normalize_rows(seg: &mut [Vec<f64>]) {
    for row in seg.iter_mut() {
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        for v in row.iter_mut() {
            *v -= mean;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-20 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
}

fn normalize_cols(seg: &mut [Vec<f64>]) {
    let rows = seg.len();
    let cols = seg[0].len();
    for c in 0..cols {
        let mean: f64 = (0..rows).map(|r| seg[r][c]).sum::<f64>() / rows as f64;
        for row in seg.iter_mut() {
            row[c] -= mean;
        }
        let norm: f64 = seg.iter().map(|row| row[c] * row[c]).sum::<f64>().sqrt();
        if norm > 1e-20 {
            for row in seg.iter_mut() {
                row[c] /= norm;
            }
        }
    }
}

/// ESTOI score between an estimate and its reference, both at 16 kHz.
/// Needs enough active speech to fill at least one 384 ms segment after
/// silent-frame removal; about 3 s of material is a practical minimum.
pub fn estoi(est: &Waveform, reference: &Waveform) -> Result<f64> {
    if est.sample_rate != 16_000 || reference.sample_rate != 16_000 {
        return Err(DerevError::SampleRateMismatch {
            expected: 16_000,
            got: if est.sample_rate != 16_000 {
                est.sample_rate
            } else {
                reference.sample_rate
            },
        });
    }
    let r10 = resample_16k_to_10k(reference)?;
    let e10 = resample_16k_to_10k(est)?;

    let (r, e) = remove_silent_frames(&r10.samples, &e10.samples);
    let r_bands = band_magnitudes(&r);
    let e_bands = band_magnitudes(&e);
    let num_frames = r_bands[0].len();
    if num_frames < SEGMENT_FRAMES {
        return Err(DerevError::Metric(format!(
            "too little active speech for ESTOI: {num_frames} frames after \
             silence removal, need {SEGMENT_FRAMES}"
        )));
    }

    let mut total = 0.0;
    let num_segments = num_frames - SEGMENT_FRAMES + 1;
    for m in 0..num_segments {
        let mut x: Vec<Vec<f64>> = (0..NUM_BANDS)
            .map(|j| r_bands[j][m..m + SEGMENT_FRAMES].to_vec())
            .collect();
        let mut y: Vec<Vec<f64>> = (0..NUM_BANDS)
            .map(|j| e_bands[j][m..m + SEGMENT_FRAMES].to_vec())
            .collect();
        normalize_rows(&mut x);
        normalize_rows(&mut y);
        normalize_cols(&mut x);
        normalize_cols(&mut y);
        let mut d = 0.0;
        for n in 0..SEGMENT_FRAMES {
            let mut corr = 0.0;
            for j in 0..NUM_BANDS {
                corr += x[j][n] * y[j][n];
            }
            d += corr;
        }
        total += d / SEGMENT_FRAMES as f64;
    }
    Ok(total / num_segments as f64)
}
