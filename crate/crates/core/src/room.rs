//! Image-source room impulse response simulation, early/late decomposition
//! and reverberant signal synthesis (static and time-varying scenes).

use rayon::prelude::*;

use crate::dsp::{self, Waveform};
use crate::error::{DerevError, Result};
use crate::rng::Rng;

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Half-width of the Hann-windowed sinc kernel used to place fractional
/// delays: 81 taps total. Sample-grid rounding would distort the CTF at
/// high frequencies.
pub const FRAC_DELAY_HALF: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaxOrder {
    /// Per-axis image counts chosen so every image within the RIR decay
    /// length is covered.
    Auto,
    /// Bound on the total reflection order; 0 keeps only the direct path.
    Fixed(u32),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomSpec {
    /// (Lx, Ly, Lz) in meters.
    pub dimensions: [f64; 3],
    pub rt60: f64,
    pub source_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    pub max_order: MaxOrder,
    pub sample_rate: u32,
    pub seed: u64,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| d <= 0.0) {
            return Err(DerevError::Config("room dimensions must be > 0".into()));
        }
        if self.rt60 <= 0.0 {
            return Err(DerevError::Config("rt60 must be > 0".into()));
        }
        for (name, p) in [("source", &self.source_pos), ("mic", &self.mic_pos)] {
            for axis in 0..3 {
                if p[axis] <= 0.0 || p[axis] >= self.dimensions[axis] {
                    return Err(DerevError::Config(format!(
                        "{name} position {:?} is not strictly inside the room {:?}",
                        p, self.dimensions
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + y * z + x * z)
    }

    pub fn source_mic_distance(&self) -> f64 {
        dist(&self.source_pos, &self.mic_pos)
    }

    /// Uniform random source/mic placement: >= 0.5 m from every wall and
    /// >= 1 m apart, derived deterministically from `seed`.
    pub fn with_random_positions(mut self, seed: u64) -> Result<Self> {
        let margin = 0.5;
        if self.dimensions.iter().any(|&d| d <= 2.0 * margin) {
            return Err(DerevError::Config(
                "room too small for 0.5 m placement margin".into(),
            ));
        }
        let mut rng = Rng::seed_from(seed).fork("placement");
        for _ in 0..10_000 {
            let pick = |rng: &mut Rng| {
                [
                    rng.range(margin, self.dimensions[0] - margin),
                    rng.range(margin, self.dimensions[1] - margin),
                    rng.range(margin, self.dimensions[2] - margin),
                ]
            };
            let s = pick(&mut rng);
            let m = pick(&mut rng);
            if dist(&s, &m) >= 1.0 {
                self.source_pos = s;
                self.mic_pos = m;
                self.seed = seed;
                return Ok(self);
            }
        }
        Err(DerevError::Config(
            "could not place source and mic 1 m apart".into(),
        ))
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// A room impulse response with its early/late split index.
#[derive(Clone, Debug)]
pub struct RirFilter {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    /// Split index: taps `[0, early_len)` are the early part.
    pub early_len: usize,
}

impl RirFilter {
    pub fn new(taps: Vec<f64>, sample_rate: u32, early_len: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(DerevError::InvalidInput("empty RIR".into()));
        }
        if early_len == 0 || early_len > taps.len() {
            return Err(DerevError::InvalidInput(format!(
                "early_len {} out of range (0, {}]",
                early_len,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(DerevError::InvalidInput("non-finite RIR taps".into()));
        }
        Ok(RirFilter {
            taps,
            sample_rate,
            early_len,
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Index of the strongest tap, i.e. the direct-path arrival for a
    /// simulated RIR.
    pub fn first_arrival(&self) -> usize {
        self.taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Set the early/late split `q_e` samples after the direct-path arrival.
    /// The early-filter length of the reverberation model counts from the
    /// direct path, not from tap zero, so a propagation delay of ~47 samples
    /// per meter does not swallow the whole early segment.
    pub fn with_early_split_after_arrival(mut self, q_e: usize) -> Self {
        self.early_len = (self.first_arrival() + q_e).min(self.taps.len()).max(1);
        self
    }
}

/// Uniform wall reflection coefficient from Sabine's formula:
/// `alpha = 0.1611 * V / (S * rt60)`, `r = sqrt(1 - alpha)`.
pub fn sabine_reflection(room: &RoomSpec) -> Result<f64> {
    room.validate()?;
    let alpha = 0.1611 * room.volume() / (room.surface_area() * room.rt60);
    if alpha > 1.0 {
        return Err(DerevError::Config(format!(
            "rt60 {} s is infeasible for this room (Sabine absorption {alpha:.3} > 1)",
            room.rt60
        )));
    }
    Ok((1.0 - alpha).sqrt())
}

/// Hann-windowed sinc fractional-delay kernel value at offset `x` samples
/// from the kernel center, zero outside +-FRAC_DELAY_HALF.
fn frac_delay_kernel(x: f64) -> f64 {
    let half = FRAC_DELAY_HALF as f64;
    if x.abs() > half {
        return 0.0;
    }
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    };
    let hann = 0.5 * (1.0 + (std::f64::consts::PI * x / (half + 1.0)).cos());
    sinc * hann
}

/// Allen-Berkley image-source simulation. Deterministic for a fixed spec:
/// each image contributes `r^reflections / (4 pi d)` at delay `d / c`,
/// placed with the 81-tap windowed-sinc kernel. RIR length is
/// `ceil(rt60 * fs)` samples.
pub fn simulate_rir(room: &RoomSpec) -> Result<RirFilter> {
    room.validate()?;
    let r = match room.max_order {
        MaxOrder::Fixed(0) => 0.0, // direct path only
        _ => sabine_reflection(room)?,
    };
    let fs = room.sample_rate as f64;
    let n_samples = (room.rt60 * fs).ceil() as usize;
    let max_dist = n_samples as f64 * SPEED_OF_SOUND / fs;

    // Per-axis image counts covering the full decay length.
    let counts: Vec<i64> = room
        .dimensions
        .iter()
        .map(|&dim| (max_dist / (2.0 * dim)).ceil() as i64)
        .collect();
    let (nx, ny, nz) = (counts[0], counts[1], counts[2]);

    let order_bound: Option<i64> = match room.max_order {
        MaxOrder::Auto => None,
        MaxOrder::Fixed(o) => Some(o as i64),
    };

    let [lx, ly, lz] = room.dimensions;
    let src = room.source_pos;
    let mic = room.mic_pos;

    // Parallel over the x image index; each slab owns its own accumulator.
    let slabs: Vec<Vec<f64>> = (-nx..=nx)
        .into_par_iter()
        .map(|mx| {
            let mut h = vec![0.0f64; n_samples];
            for my in -ny..=ny {
                for mz in -nz..=nz {
                    for q in 0..2i64 {
                        for j in 0..2i64 {
                            for k in 0..2i64 {
                                let order = (2 * mx - q).abs()
                                    + (2 * my - j).abs()
                                    + (2 * mz - k).abs();
                                if let Some(bound) = order_bound {
                                    if order > bound {
                                        continue;
                                    }
                                }
                                let px = (1 - 2 * q) as f64 * src[0] - mic[0]
                                    + 2.0 * mx as f64 * lx;
                                let py = (1 - 2 * j) as f64 * src[1] - mic[1]
                                    + 2.0 * my as f64 * ly;
                                let pz = (1 - 2 * k) as f64 * src[2] - mic[2]
                                    + 2.0 * mz as f64 * lz;
                                let d = (px * px + py * py + pz * pz).sqrt();
                                let delay = d / SPEED_OF_SOUND * fs;
                                let center = delay.round() as i64;
                                if center - FRAC_DELAY_HALF as i64 >= n_samples as i64 {
                                    continue;
                                }
                                let refl = ((mx - q).abs()
                                    + mx.abs()
                                    + (my - j).abs()
                                    + my.abs()
                                    + (mz - k).abs()
                                    + mz.abs()) as i32;
                                if r == 0.0 && refl > 0 {
                                    continue;
                                }
                                let amp = r.powi(refl)
                                    / (4.0 * std::f64::consts::PI * d.max(1e-3));
                                let lo = (center - FRAC_DELAY_HALF as i64).max(0);
                                let hi = (center + FRAC_DELAY_HALF as i64)
                                    .min(n_samples as i64 - 1);
                                for n in lo..=hi {
                                    h[n as usize] +=
                                        amp * frac_delay_kernel(n as f64 - delay);
                                }
                            }
                        }
                    }
                }
            }
            h
        })
        .collect();

    // Deterministic reduction in slab order.
    let mut taps = vec![0.0f64; n_samples];
    for slab in slabs {
        for (t, v) in taps.iter_mut().zip(slab.iter()) {
            *t += v;
        }
    }

    RirFilter::new(taps, room.sample_rate, n_samples)
}

/// Early/late decomposition at the filter's split index. Concatenating the
/// parts reproduces the original taps exactly.
pub fn split_early_late(h: &RirFilter) -> (Vec<f64>, Vec<f64>) {
    let early = h.taps[..h.early_len].to_vec();
    let late = h.taps[h.early_len..].to_vec();
    (early, late)
}

/// Static reverberant synthesis. Outputs are truncated to `len(s)` so the
/// pair aligns with the dry signal for training targets. `y` is synthesized
/// as `y_early + y_late`, which makes the decomposition identity exact by
/// construction.
pub fn convolve_static(s: &Waveform, h: &RirFilter) -> Result<(Waveform, Waveform, Waveform)> {
    if s.sample_rate != h.sample_rate {
        return Err(DerevError::SampleRateMismatch {
            expected: s.sample_rate,
            got: h.sample_rate,
        });
    }
    let (early, late) = split_early_late(h);
    let n = s.len();

    let mut y_early = dsp::convolve(&s.samples, &early);
    y_early.truncate(n);
    y_early.resize(n, 0.0);

    let mut y_late = vec![0.0; n];
    if !late.is_empty() {
        let tail = dsp::convolve(&s.samples, &late);
        // The late part starts at lag early_len.
        for (i, v) in tail.iter().enumerate() {
            let idx = i + h.early_len;
            if idx >= n {
                break;
            }
            y_late[idx] = *v;
        }
    }

    let y: Vec<f64> = y_early
        .iter()
        .zip(y_late.iter())
        .map(|(a, b)| a + b)
        .collect();
    Ok((
        Waveform::new(y, s.sample_rate)?,
        Waveform::new(y_early, s.sample_rate)?,
        Waveform::new(y_late, s.sample_rate)?,
    ))
}

/// An ordered set of RIRs cycled with a fixed switch period.
#[derive(Clone, Debug)]
pub struct SceneScript {
    pub rirs: Vec<RirFilter>,
    pub switch_period: f64,
}

impl SceneScript {
    pub fn new(rirs: Vec<RirFilter>, switch_period: f64) -> Result<Self> {
        if rirs.is_empty() {
            return Err(DerevError::Config("scene needs at least one RIR".into()));
        }
        if switch_period <= 0.0 {
            return Err(DerevError::Config("switch period must be > 0".into()));
        }
        let rate = rirs[0].sample_rate;
        for r in &rirs {
            if r.sample_rate != rate {
                return Err(DerevError::SampleRateMismatch {
                    expected: rate,
                    got: r.sample_rate,
                });
            }
        }
        // Members share the early-split policy (the same Q_e after each
        // direct-path arrival); the absolute split index may differ with
        // propagation delay.
        Ok(SceneScript {
            rirs,
            switch_period,
        })
    }
}

/// Time-varying synthesis with input-block switching: the input block for
/// `t in [m T, (m+1) T)` is convolved with RIR `m mod R` and the block
/// outputs (with their tails) are overlap-added. Early and late parts follow
/// the same schedule, so the decomposition identity holds per block.
pub fn convolve_time_varying(
    s: &Waveform,
    scene: &SceneScript,
) -> Result<(Waveform, Waveform, Waveform)> {
    if s.sample_rate != scene.rirs[0].sample_rate {
        return Err(DerevError::SampleRateMismatch {
            expected: s.sample_rate,
            got: scene.rirs[0].sample_rate,
        });
    }
    let n = s.len();
    let block = ((scene.switch_period * s.sample_rate as f64).round() as usize).max(1);
    let mut y_early = vec![0.0; n];
    let mut y_late = vec![0.0; n];

    let mut start = 0usize;
    let mut m = 0usize;
    while start < n {
        let end = (start + block).min(n);
        let h = &scene.rirs[m % scene.rirs.len()];
        let (early, late) = split_early_late(h);

        let seg = &s.samples[start..end];
        let e = dsp::convolve(seg, &early);
        for (i, v) in e.iter().enumerate() {
            if start + i < n {
                y_early[start + i] += v;
            }
        }
        if !late.is_empty() {
            let t = dsp::convolve(seg, &late);
            for (i, v) in t.iter().enumerate() {
                let idx = start + i + h.early_len;
                if idx < n {
                    y_late[idx] += v;
                }
            }
        }
        start = end;
        m += 1;
    }

    let y: Vec<f64> = y_early
        .iter()
        .zip(y_late.iter())
        .map(|(a, b)| a + b)
        .collect();
    Ok((
        Waveform::new(y, s.sample_rate)?,
        Waveform::new(y_early, s.sample_rate)?,
        Waveform::new(y_late, s.sample_rate)?,
    ))
}

/// RT60 estimate by Schroeder backward integration: linear fit of the energy
/// decay curve between -5 and -25 dB, extrapolated to -60 dB.
pub fn schroeder_rt60(h: &RirFilter) -> Option<f64> {
    let total: f64 = h.taps.iter().map(|t| t * t).sum();
    if total <= 0.0 {
        return None;
    }
    let mut edc = Vec::with_capacity(h.taps.len());
    let mut acc = 0.0;
    for t in h.taps.iter().rev() {
        acc += t * t;
        edc.push(acc);
    }
    edc.reverse();
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).log10()).collect();

    let t_at = |level: f64| -> Option<usize> { db.iter().position(|&d| d <= level) };
    let i5 = t_at(-5.0)?;
    let i25 = t_at(-25.0)?;
    if i25 <= i5 {
        return None;
    }
    // Least-squares slope of db over [i5, i25].
    let xs: Vec<f64> = (i5..=i25).map(|i| i as f64 / h.sample_rate as f64).collect();
    let ys = &db[i5..=i25];
    let nf = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den <= 0.0 || num >= 0.0 {
        return None;
    }
    let slope = num / den; // dB per second, negative
    Some(-60.0 / slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn room1(rt60: f64) -> RoomSpec {
        RoomSpec {
            dimensions: [8.0, 6.0, 4.0],
            rt60,
            source_pos: [2.0, 3.0, 1.5],
            mic_pos: [5.0, 2.0, 1.8],
            max_order: MaxOrder::Auto,
            sample_rate: 16_000,
            seed: 0,
        }
    }

    #[test]
    fn sabine_room1_value() {
        // Hand evaluation: V = 192, S = 208, rt60 = 0.5
        // alpha = 0.1611 * 192 / (208 * 0.5) = 0.29741...
        let r = sabine_reflection(&room1(0.5)).unwrap();
        assert!((r - 0.8382).abs() < 5e-4, "r = {r}");
    }

    #[test]
    fn sabine_limits() {
        // rt60 -> infinity: alpha -> 0, r -> 1.
        let r = sabine_reflection(&room1(1.0e9)).unwrap();
        assert!((r - 1.0).abs() < 1e-6);
        // alpha = 1 boundary: pick rt60 so alpha == 1 exactly.
        let mut spec = room1(1.0);
        spec.rt60 = 0.1611 * spec.volume() / spec.surface_area();
        let r = sabine_reflection(&spec).unwrap();
        assert!(r.abs() < 1e-9);
        // Slightly smaller rt60 is infeasible.
        spec.rt60 *= 0.99;
        assert!(sabine_reflection(&spec).is_err());
    }

    #[test]
    fn direct_path_only_is_single_pulse() {
        let mut spec = room1(0.3);
        spec.max_order = MaxOrder::Fixed(0);
        // Distance chosen so the delay is exactly 47 samples: the sinc
        // kernel then lands on the sample grid and the peak tap carries the
        // full 1/(4 pi d) amplitude.
        let d = 47.0 * SPEED_OF_SOUND / 16_000.0;
        spec.source_pos = [2.0, 3.0, 2.0];
        spec.mic_pos = [2.0 + d, 3.0, 2.0];
        let h = simulate_rir(&spec).unwrap();
        let peak = h.first_arrival();
        assert_eq!(peak, 47);
        let amp = h.taps[peak];
        let want = 1.0 / (4.0 * std::f64::consts::PI * d);
        assert!((amp - want).abs() < 1e-9, "amp {amp} want {want}");
        // Energy outside the kernel support is zero.
        let lo = peak.saturating_sub(FRAC_DELAY_HALF + 1);
        let hi = (peak + FRAC_DELAY_HALF + 1).min(h.len());
        let outside: f64 = h.taps[..lo]
            .iter()
            .chain(h.taps[hi..].iter())
            .map(|t| t * t)
            .sum();
        assert!(outside < 1e-12);
    }

    #[test]
    fn direct_path_peak_near_47_samples_per_meter() {
        let mut spec = room1(0.4);
        spec.source_pos = [3.0, 3.0, 2.0];
        spec.mic_pos = [4.0, 3.0, 2.0]; // 1 m
        let h = simulate_rir(&spec).unwrap();
        let peak = h.first_arrival();
        assert!((peak as i64 - 47).abs() <= 2, "peak {peak}");
    }

    #[test]
    fn schroeder_decay_near_target() {
        // Image-source decay with uniform Sabine reflectances runs long when
        // the absorption is low (sparse-lattice bias, identical in the
        // reference generator), so each target gets a room sized to put the
        // Sabine absorption near 0.5 where the method is accurate.
        for &(rt, dims) in &[(0.3, [8.0, 6.0, 4.0]), (0.5, [12.0, 9.0, 6.0])] {
            let spec = RoomSpec {
                dimensions: dims,
                rt60: rt,
                source_pos: [dims[0] * 0.3, dims[1] * 0.6, dims[2] * 0.45],
                mic_pos: [dims[0] * 0.72, dims[1] * 0.35, dims[2] * 0.6],
                max_order: MaxOrder::Auto,
                sample_rate: 16_000,
                seed: 0,
            };
            let h = simulate_rir(&spec).unwrap();
            let est = schroeder_rt60(&h).expect("decay curve");
            assert!(
                (est - rt).abs() <= 0.2 * rt,
                "target {rt}, estimate {est}"
            );
        }
    }

    #[test]
    fn determinism() {
        let spec = room1(0.3);
        let a = simulate_rir(&spec).unwrap();
        let b = simulate_rir(&spec).unwrap();
        assert_eq!(a.taps, b.taps);
    }

    #[test]
    fn source_mic_swap_symmetry() {
        let mut spec = room1(0.25);
        let a = simulate_rir(&spec).unwrap();
        std::mem::swap(&mut spec.source_pos, &mut spec.mic_pos);
        let b = simulate_rir(&spec).unwrap();
        for (x, y) in a.taps.iter().zip(b.taps.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn split_concatenation_identity() {
        let h = RirFilter::new((0..100).map(|i| (i as f64).sin()).collect(), 16_000, 32)
            .unwrap();
        let (e, l) = split_early_late(&h);
        assert_eq!(e.len(), 32);
        let mut cat = e.clone();
        cat.extend_from_slice(&l);
        assert_eq!(cat, h.taps);

        // early_len == len: empty late part.
        let h2 = RirFilter::new(vec![1.0, 2.0, 3.0], 16_000, 3).unwrap();
        let (_, l2) = split_early_late(&h2);
        assert!(l2.is_empty());
    }

    #[test]
    fn convolution_impulse_identity() {
        let s = synth::speech_like(1, 0.4, 16_000);
        let h = RirFilter::new(vec![1.0], 16_000, 1).unwrap();
        let (y, ye, yl) = convolve_static(&s, &h).unwrap();
        assert_eq!(y.samples, s.samples);
        assert_eq!(ye.samples, s.samples);
        assert!(yl.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn convolution_scaled_delay() {
        let s = synth::speech_like(2, 0.2, 16_000);
        let h = RirFilter::new(vec![0.0, 0.0, 0.0, 0.5], 16_000, 4).unwrap();
        let (y, _, _) = convolve_static(&s, &h).unwrap();
        for n in 3..s.len() {
            assert!((y.samples[n] - 0.5 * s.samples[n - 3]).abs() < 1e-12);
        }
    }

    #[test]
    fn early_late_identity_exact() {
        let s = synth::speech_like(3, 0.5, 16_000);
        let mut spec = room1(0.3);
        spec.dimensions = [5.0, 4.0, 3.0];
        spec.source_pos = [1.5, 2.0, 1.4];
        spec.mic_pos = [3.2, 1.2, 1.7];
        let h = simulate_rir(&spec).unwrap().with_early_split_after_arrival(32);
        let (y, ye, yl) = convolve_static(&s, &h).unwrap();
        for i in 0..y.len() {
            assert_eq!(y.samples[i], ye.samples[i] + yl.samples[i]);
        }
        // And the sum matches a one-shot convolution of the full RIR.
        let full = dsp::convolve(&s.samples, &h.taps);
        for i in 0..y.len() {
            assert!((y.samples[i] - full[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn linearity_of_split_convolution() {
        // conv(x, h) == conv(x, h_early) + shifted conv(x, h_late)
        let s = synth::white_noise(4, 2000, 0.2, 16_000);
        let taps: Vec<f64> = (0..200).map(|i| (-0.01 * i as f64).exp() * ((i * 7) % 13) as f64 / 13.0).collect();
        let h = RirFilter::new(taps, 16_000, 32).unwrap();
        let (y, ye, yl) = convolve_static(&s, &h).unwrap();
        for i in 0..y.len() {
            assert_eq!(y.samples[i], ye.samples[i] + yl.samples[i]);
        }
    }

    #[test]
    fn time_varying_single_rir_matches_static() {
        let s = synth::speech_like(5, 2.3, 16_000);
        let taps: Vec<f64> = (0..500)
            .map(|i| (-0.02 * i as f64).exp() * (((i * 31) % 17) as f64 / 17.0 - 0.5))
            .collect();
        let h = RirFilter::new(taps, 16_000, 50).unwrap();
        let scene = SceneScript::new(vec![h.clone()], 1.0).unwrap();
        let (y_tv, ye_tv, yl_tv) = convolve_time_varying(&s, &scene).unwrap();
        let (y_st, ye_st, yl_st) = convolve_static(&s, &h).unwrap();
        for i in 0..y_st.len() {
            assert!((y_tv.samples[i] - y_st.samples[i]).abs() < 1e-10);
            assert!((ye_tv.samples[i] - ye_st.samples[i]).abs() < 1e-10);
            assert!((yl_tv.samples[i] - yl_st.samples[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn time_varying_alternating_delays() {
        // Two impulse RIRs at lags 0 and 1 switched every second: block m of the
        // output is the input (m even) or the one-sample-delayed input
        // (m odd), with the overlap-add tail crossing each boundary.
        let fs = 16_000u32;
        let s = synth::white_noise(6, 2 * fs as usize + 500, 0.3, fs);
        let h0 = RirFilter::new(vec![1.0], fs, 1).unwrap();
        let h1 = RirFilter::new(vec![0.0, 1.0], fs, 1).unwrap();
        let scene = SceneScript::new(vec![h0, h1], 1.0).unwrap();
        let (y, _, _) = convolve_time_varying(&s, &scene).unwrap();

        // Direct block-convolution oracle.
        let n = s.len();
        let block = fs as usize;
        let mut want = vec![0.0; n];
        let mut start = 0;
        let mut m = 0;
        while start < n {
            let end = (start + block).min(n);
            for i in start..end {
                if m % 2 == 0 {
                    want[i] += s.samples[i];
                } else if i + 1 < n {
                    want[i + 1] += s.samples[i];
                }
            }
            start = end;
            m += 1;
        }
        for i in 0..n {
            assert!((y.samples[i] - want[i]).abs() < 1e-12, "sample {i}");
        }
    }

    #[test]
    fn time_varying_identical_rirs_match_static() {
        let s = synth::speech_like(7, 1.7, 16_000);
        let taps: Vec<f64> = (0..300)
            .map(|i| (-0.015 * i as f64).exp() * (((i * 13) % 11) as f64 / 11.0 - 0.4))
            .collect();
        let h = RirFilter::new(taps, 16_000, 40).unwrap();
        let scene = SceneScript::new(vec![h.clone(), h.clone(), h.clone()], 0.5).unwrap();
        let (y_tv, _, _) = convolve_time_varying(&s, &scene).unwrap();
        let (y_st, _, _) = convolve_static(&s, &h).unwrap();
        for i in 0..y_st.len() {
            assert!((y_tv.samples[i] - y_st.samples[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn random_placement_respects_margins() {
        let spec = room1(0.4).with_random_positions(123).unwrap();
        for p in [&spec.source_pos, &spec.mic_pos] {
            for a in 0..3 {
                assert!(p[a] >= 0.5 && p[a] <= spec.dimensions[a] - 0.5);
            }
        }
        assert!(spec.source_mic_distance() >= 1.0);
        // Deterministic for the same seed.
        let again = room1(0.4).with_random_positions(123).unwrap();
        assert_eq!(spec.source_pos, again.source_pos);
    }
}
