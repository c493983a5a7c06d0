//! STFT analysis/synthesis, log-power-spectrum features and multi-frame
//! stacking.
//!
//! Synthesis uses weighted overlap-add: each inverse-transformed frame is
//! multiplied by the analysis window and the result divided by the shifted
//! squared-window sum. A plain Hamming window at 60% overlap is not
//! constant-overlap-add, so this normalization is what makes the ISTFT an
//! exact right-inverse of the STFT.

use crate::error::{DerevError, Result};
use crate::fft::{self, Complex};

/// Floor applied to |Y|^2 before the log so silent cells stay finite.
pub const LPS_FLOOR: f64 = 1e-10;

/// Mono sampled signal.
#[derive(Clone, Debug)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(DerevError::InvalidInput("empty waveform".into()));
        }
        if sample_rate == 0 {
            return Err(DerevError::InvalidInput("sample rate must be > 0".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(DerevError::InvalidInput(
                "waveform contains non-finite samples".into(),
            ));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
}

/// STFT analysis configuration. Defaults follow the 400-sample Hamming
/// window at 60% overlap with a 512-point FFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_len: 400,
            hop: 160,
            fft_len: 512,
            window_kind: WindowKind::Hamming,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_len {
            return Err(DerevError::Config(format!(
                "need 0 < hop ({}) <= window_len ({}) <= fft_len ({})",
                self.hop, self.window_len, self.fft_len
            )));
        }
        if !self.fft_len.is_power_of_two() {
            return Err(DerevError::Config(format!(
                "fft_len {} is not a power of two",
                self.fft_len
            )));
        }
        if self.window_len < 2 {
            return Err(DerevError::Config("window_len must be >= 2".into()));
        }
        // Reconstruction feasibility: the shifted squared-window sum must be
        // strictly positive at every sample offset.
        let w = make_window(self)?;
        for n in 0..self.hop {
            let mut acc = 0.0;
            let mut m = n;
            while m < self.window_len {
                acc += w[m] * w[m];
                m += self.hop;
            }
            if acc <= 0.0 {
                return Err(DerevError::Config(
                    "window/hop combination has zero squared-window sum".into(),
                ));
            }
        }
        Ok(())
    }

    /// One-sided bin count.
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn frames_for(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.hop)
    }
}

/// Periodic (DFT-even) Hamming window.
pub fn make_window(config: &StftConfig) -> Result<Vec<f64>> {
    if config.window_len < 2 {
        return Err(DerevError::Config("window_len must be >= 2".into()));
    }
    let n = config.window_len;
    Ok(match config.window_kind {
        WindowKind::Hamming => (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect(),
    })
}

/// One-sided complex STFT grid, bin-major: index (k, l).
#[derive(Clone, Debug)]
pub struct SpectralFrameSet {
    coeffs: Vec<Complex>,
    pub config: StftConfig,
    bins: usize,
    frames: usize,
}

impl SpectralFrameSet {
    pub fn zeros(config: StftConfig, frames: usize) -> Self {
        let bins = config.bins();
        SpectralFrameSet {
            coeffs: vec![Complex::ZERO; bins * frames],
            config,
            bins,
            frames,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn at(&self, k: usize, l: usize) -> Complex {
        self.coeffs[k * self.frames + l]
    }

    #[inline]
    pub fn set(&mut self, k: usize, l: usize, v: Complex) {
        self.coeffs[k * self.frames + l] = v;
    }

    /// Contiguous frame row for bin `k`.
    pub fn bin(&self, k: usize) -> &[Complex] {
        &self.coeffs[k * self.frames..(k + 1) * self.frames]
    }

    pub fn bin_mut(&mut self, k: usize) -> &mut [Complex] {
        &mut self.coeffs[k * self.frames..(k + 1) * self.frames]
    }

    /// |Y| grid, bin-major (k, l), frames contiguous.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.abs()).collect()
    }

    pub fn map(&self, f: impl Fn(Complex) -> Complex) -> SpectralFrameSet {
        SpectralFrameSet {
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
            config: self.config,
            bins: self.bins,
            frames: self.frames,
        }
    }
}

/// Windowed one-sided STFT. Frame `l` covers samples
/// `[l*hop, l*hop + window_len)`; the tail is zero-padded so every sample is
/// covered, giving `ceil(len/hop)` frames.
pub fn stft(x: &Waveform, config: &StftConfig) -> Result<SpectralFrameSet> {
    config.validate()?;
    if x.is_empty() {
        return Err(DerevError::InvalidInput("empty waveform".into()));
    }
    let window = make_window(config)?;
    let frames = config.frames_for(x.len());
    let mut out = SpectralFrameSet::zeros(*config, frames);

    let mut frame = vec![0.0; config.window_len];
    for l in 0..frames {
        let start = l * config.hop;
        for (i, f) in frame.iter_mut().enumerate() {
            let n = start + i;
            *f = if n < x.len() {
                x.samples[n] * window[i]
            } else {
                0.0
            };
        }
        let spec = fft::rfft(&frame, config.fft_len);
        for (k, c) in spec.into_iter().enumerate() {
            out.set(k, l, c);
        }
    }
    Ok(out)
}

/// Weighted overlap-add synthesis. Output length is
/// `(frames - 1) * hop + window_len`; callers that know the original sample
/// count truncate.
pub fn istft(y: &SpectralFrameSet) -> Result<Waveform> {
    let config = &y.config;
    config.validate()?;
    if y.frames() == 0 {
        return Err(DerevError::InvalidInput("empty frame set".into()));
    }
    let window = make_window(config)?;
    let out_len = (y.frames() - 1) * config.hop + config.window_len;
    let mut acc = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];

    let mut spec = vec![Complex::ZERO; config.bins()];
    for l in 0..y.frames() {
        for (k, s) in spec.iter_mut().enumerate() {
            *s = y.at(k, l);
        }
        let frame = fft::irfft(&spec, config.fft_len);
        let start = l * config.hop;
        for i in 0..config.window_len {
            acc[start + i] += frame[i] * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    for (a, w) in acc.iter_mut().zip(wsum.iter()) {
        debug_assert!(*w > 0.0);
        *a /= *w;
    }
    // Sample rate is not carried by the frame set; callers re-attach it.
    Waveform::new(acc, 16_000)
}

/// Real LPS grid, bin-major (k, l) like `SpectralFrameSet`.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub bins: usize,
    pub frames: usize,
}

impl FeatureMatrix {
    #[inline]
    pub fn at(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.frames + l]
    }
}

/// Log power spectrum `v = ln(max(|Y|^2, LPS_FLOOR))`.
pub fn lps(y: &SpectralFrameSet) -> FeatureMatrix {
    let frames = y.frames();
    let bins = y.bins();
    let mut values = vec![0.0; bins * frames];
    for k in 0..bins {
        let row = y.bin(k);
        let dst = &mut values[k * frames..(k + 1) * frames];
        for (d, c) in dst.iter_mut().zip(row.iter()) {
            *d = c.norm_sqr().max(LPS_FLOOR).ln();
        }
    }
    FeatureMatrix {
        values,
        bins,
        frames,
    }
}

/// Multi-frame context around frame `l`: columns
/// `v_{l-(lm-1)/2} .. v_{l+(lm-1)/2}`, zero vectors outside `[0, L)`.
/// Returned row-major: `out[k * lm + j]`.
pub fn stack_multiframe(v: &FeatureMatrix, l: usize, lm: usize) -> Result<Vec<f64>> {
    if lm % 2 == 0 {
        return Err(DerevError::Config(format!("L_m must be odd, got {lm}")));
    }
    let half = (lm - 1) / 2;
    let mut out = vec![0.0; v.bins * lm];
    for j in 0..lm {
        let src = l as isize - half as isize + j as isize;
        if src < 0 || src as usize >= v.frames {
            continue;
        }
        let src = src as usize;
        for k in 0..v.bins {
            out[k * lm + j] = v.at(k, src);
        }
    }
    Ok(out)
}

/// Full linear convolution, direct form. O(len(x) * len(h)).
pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (q, &hq) in h.iter().enumerate() {
        if hq == 0.0 {
            continue;
        }
        for (n, &xn) in x.iter().enumerate() {
            y[n + q] += hq * xn;
        }
    }
    y
}

/// Full linear convolution via FFT overlap-add; falls back to the direct
/// form for short filters.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if h.len() < 128 || x.len() < 128 {
        return convolve_direct(x, h);
    }
    let out_len = x.len() + h.len() - 1;
    let fft_len = (2 * h.len().next_power_of_two()).max(1024);
    let block = fft_len - h.len() + 1;

    let h_spec = fft::rfft(h, fft_len);
    let mut y = vec![0.0; out_len];
    let mut start = 0;
    while start < x.len() {
        let end = (start + block).min(x.len());
        let x_spec = fft::rfft(&x[start..end], fft_len);
        let prod: Vec<Complex> = x_spec
            .iter()
            .zip(h_spec.iter())
            .map(|(a, b)| *a * *b)
            .collect();
        let seg = fft::irfft(&prod, fft_len);
        let seg_len = (end - start) + h.len() - 1;
        for (i, &v) in seg.iter().take(seg_len).enumerate() {
            if start + i < out_len {
                y[start + i] += v;
            }
        }
        start = end;
    }
    y
}
