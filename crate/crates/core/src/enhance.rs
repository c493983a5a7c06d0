//! Applying the estimated per-frame inverse filter to reverberant magnitude
//! spectra, phase-borrowing reconstruction, and the mask/LPS baseline heads.
//!
//! Output frame l depends only on input frames <= l here; the only
//! look-ahead in the whole pipeline is the multi-frame feature stacking.

use crate::dsp::{self, SpectralFrameSet, Waveform};
use crate::error::{DerevError, Result};
use crate::net::Grid3;

/// Per-frame real inverse filter W_klp, taps along the channel axis:
/// shape (P_d, K, L).
#[derive(Clone, Debug)]
pub struct InverseFilter {
    pub values: Grid3,
}

impl InverseFilter {
    pub fn new(values: Grid3) -> Result<Self> {
        if values.channels == 0 {
            return Err(DerevError::InvalidInput("P_d must be >= 1".into()));
        }
        if values.data().iter().any(|v| !v.is_finite()) {
            return Err(DerevError::InvalidInput("non-finite filter values".into()));
        }
        Ok(InverseFilter { values })
    }

    pub fn taps(&self) -> usize {
        self.values.channels
    }

    /// The identity filter: W = delta(p), which reproduces |Y| exactly.
    pub fn identity(taps: usize, bins: usize, frames: usize) -> Self {
        let mut g = Grid3::zeros(taps, bins, frames);
        for k in 0..bins {
            for l in 0..frames {
                g.set(0, k, l, 1.0);
            }
        }
        InverseFilter { values: g }
    }
}

/// Real-valued mask in [0, 1].
#[derive(Clone, Debug)]
pub struct Mask {
    pub values: Vec<f64>,
    pub bins: usize,
    pub frames: usize,
}

impl Mask {
    pub fn new(values: Vec<f64>, bins: usize, frames: usize) -> Result<Self> {
        if values.len() != bins * frames {
            return Err(DerevError::ShapeMismatch("mask size".into()));
        }
        if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(DerevError::InvalidInput("mask values outside [0, 1]".into()));
        }
        Ok(Mask {
            values,
            bins,
            frames,
        })
    }

    #[inline]
    pub fn at(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.frames + l]
    }
}

/// Time-shifted magnitude stack: channel p holds |Y_{k,l-p}|, zeros where
/// l < p. This is the tensor the inverse filter multiplies.
pub fn shifted_magnitude_stack(mag: &[f64], bins: usize, frames: usize, taps: usize) -> Grid3 {
    let mut g = Grid3::zeros(taps, bins, frames);
    for p in 0..taps {
        for k in 0..bins {
            let src = &mag[k * frames..(k + 1) * frames];
            let dst = g.row_mut(p, k);
            for l in p..frames {
                dst[l] = src[l - p];
            }
        }
    }
    g
}

/// `|Y^E_kl| = max(0, sum_p W_klp |Y_{k,l-p}|)`: element-wise product of the
/// stack and filter tensors, summed along the channel axis, clamped at zero.
/// Returns the magnitude grid (bin-major) and, for training, the pre-clamp
/// values.
pub fn apply_inverse_filter(stack: &Grid3, w: &InverseFilter) -> Result<(Vec<f64>, Vec<f64>)> {
    if stack.shape() != w.values.shape() {
        return Err(DerevError::ShapeMismatch(format!(
            "stack {:?} vs filter {:?}",
            stack.shape(),
            w.values.shape()
        )));
    }
    let (taps, bins, frames) = stack.shape();
    let mut pre = vec![0.0; bins * frames];
    for p in 0..taps {
        for k in 0..bins {
            let s = stack.row(p, k);
            let f = w.values.row(p, k);
            let dst = &mut pre[k * frames..(k + 1) * frames];
            for l in 0..frames {
                dst[l] += f[l] * s[l];
            }
        }
    }
    let mag = pre.iter().map(|&v| v.max(0.0)).collect();
    Ok((mag, pre))
}

/// Combine an estimated magnitude with the reverberant phase and synthesize:
/// `Y^E = mag * exp(j arg(Y))`, then the weighted overlap-add inverse STFT.
pub fn reconstruct(mag: &[f64], y: &SpectralFrameSet) -> Result<Waveform> {
    let bins = y.bins();
    let frames = y.frames();
    if mag.len() != bins * frames {
        return Err(DerevError::ShapeMismatch(format!(
            "magnitude grid has {} cells, expected {}",
            mag.len(),
            bins * frames
        )));
    }
    let mut est = SpectralFrameSet::zeros(y.config, frames);
    for k in 0..bins {
        for l in 0..frames {
            let c = y.at(k, l);
            let m = mag[k * frames + l];
            let a = c.abs();
            let phase = if a > 0.0 {
                c.scale(1.0 / a)
            } else {
                crate::fft::Complex::ONE
            };
            est.set(k, l, phase.scale(m));
        }
    }
    dsp::istft(&est)
}

/// Element-wise complex scaling `M_kl * Y_kl`.
pub fn apply_mask(y: &SpectralFrameSet, m: &Mask) -> Result<SpectralFrameSet> {
    if m.bins != y.bins() || m.frames != y.frames() {
        return Err(DerevError::ShapeMismatch(format!(
            "mask {}x{} vs frames {}x{}",
            m.bins,
            m.frames,
            y.bins(),
            y.frames()
        )));
    }
    let mut out = SpectralFrameSet::zeros(y.config, y.frames());
    for k in 0..y.bins() {
        for l in 0..y.frames() {
            out.set(k, l, y.at(k, l).scale(m.at(k, l)));
        }
    }
    Ok(out)
}

/// DSM head decode: the network regresses LPS, so `mag = exp(lps / 2)`.
pub fn dsm_head_decode(lps_out: &[f64]) -> Vec<f64> {
    lps_out.iter().map(|&v| (v / 2.0).exp()).collect()
}
