//! Convolutive transfer function model: per-bin convolution of spectral
//! frames along time, `Y_kl = sum_p H*_kp S_{k,l-p}`, plus extraction of the
//! CTF coefficients from a time-domain RIR.
//!
//! Extraction segments the RIR into hop-length blocks and takes the
//! zero-padded DFT of each block: tap p of bin k is the conjugate spectrum
//! of taps `[p*hop, (p+1)*hop)`. An impulse at lag zero maps to the identity
//! CTF and a delay of `p0*hop` samples maps to a single tap at `p0`, which
//! keeps the model exact on hop-multiple delays. Cross-band terms are
//! ignored, as usual for the CTF approximation.

use crate::dsp::{SpectralFrameSet, StftConfig};
use crate::error::{DerevError, Result};
use crate::fft::{self, Complex};
use crate::room::RirFilter;

/// Complex CTF coefficient grid, bin-major: index (k, p).
#[derive(Clone, Debug)]
pub struct CtfFilter {
    coeffs: Vec<Complex>,
    pub config: StftConfig,
    bins: usize,
    taps: usize,
}

impl CtfFilter {
    pub fn zeros(config: StftConfig, taps: usize) -> Self {
        let bins = config.bins();
        CtfFilter {
            coeffs: vec![Complex::ZERO; bins * taps],
            config,
            bins,
            taps,
        }
    }

    /// Identity filter: H_k0 = 1, everything else 0.
    pub fn identity(config: StftConfig, taps: usize) -> Self {
        let mut f = CtfFilter::zeros(config, taps.max(1));
        for k in 0..f.bins {
            f.set(k, 0, Complex::ONE);
        }
        f
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    #[inline]
    pub fn at(&self, k: usize, p: usize) -> Complex {
        self.coeffs[k * self.taps + p]
    }

    #[inline]
    pub fn set(&mut self, k: usize, p: usize, v: Complex) {
        self.coeffs[k * self.taps + p] = v;
    }
}

/// CTF coefficients of a time-domain RIR under the given analysis config.
/// Spans `P = ceil((Q + window_len) / hop)` frame-taps.
pub fn ctf_from_rir(h: &RirFilter, config: &StftConfig) -> Result<CtfFilter> {
    config.validate()?;
    let q = h.taps.len();
    let taps = (q + config.window_len).div_ceil(config.hop);
    let mut out = CtfFilter::zeros(*config, taps);
    let mut seg = vec![0.0; config.hop];
    for p in 0..taps {
        let start = p * config.hop;
        if start >= q {
            break; // trailing taps stay zero
        }
        let end = (start + config.hop).min(q);
        seg.fill(0.0);
        seg[..end - start].copy_from_slice(&h.taps[start..end]);
        let spec = fft::rfft(&seg, config.fft_len);
        // Stored conjugated so that ctf_convolve's H* recovers the forward
        // transfer e^{-j 2 pi k d / N} for an in-block delay d.
        for (k, c) in spec.into_iter().enumerate() {
            out.set(k, p, c.conj());
        }
    }
    Ok(out)
}

/// Per-bin causal convolution along frames: `out_kl = sum_p H*_kp S_{k,l-p}`,
/// frames before 0 treated as zero.
pub fn ctf_convolve(s: &SpectralFrameSet, h: &CtfFilter) -> Result<SpectralFrameSet> {
    if s.bins() != h.bins() {
        return Err(DerevError::ShapeMismatch(format!(
            "frame set has {} bins, CTF has {}",
            s.bins(),
            h.bins()
        )));
    }
    let frames = s.frames();
    let mut out = SpectralFrameSet::zeros(s.config, frames);
    for k in 0..s.bins() {
        let src = s.bin(k);
        let dst = out.bin_mut(k);
        for p in 0..h.taps() {
            let hk = h.at(k, p).conj();
            if hk.re == 0.0 && hk.im == 0.0 {
                continue;
            }
            for l in p..frames {
                dst[l] += hk * src[l - p];
            }
        }
    }
    Ok(out)
}

/// Nonnegative magnitude kernel |H_kp|, used to build synthetic tasks where
/// |Y| is exactly a frame-convolution of |S|.
pub fn ctf_magnitude_kernel(h: &CtfFilter) -> Vec<f64> {
    let mut out = vec![0.0; h.bins() * h.taps()];
    for k in 0..h.bins() {
        for p in 0..h.taps() {
            out[k * h.taps() + p] = h.at(k, p).abs();
        }
    }
    out
}

/// Relative spectrogram error between `stft(h*s)` and the CTF model
/// prediction; the CTF is an approximation for general RIRs, so this is
/// reported rather than asserted.
pub fn ctf_approximation_error(
    s: &SpectralFrameSet,
    reverberant: &SpectralFrameSet,
    h: &CtfFilter,
) -> Result<f64> {
    let model = ctf_convolve(s, h)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..reverberant.bins() {
        for l in 0..reverberant.frames().min(model.frames()) {
            num += (model.at(k, l) - reverberant.at(k, l)).norm_sqr();
            den += reverberant.at(k, l).norm_sqr();
        }
    }
    Ok((num / den.max(1e-300)).sqrt())
}
