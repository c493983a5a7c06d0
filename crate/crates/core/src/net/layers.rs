//! Convolution, transposed convolution and batch normalization kernels,
//! forward and backward, over mini-batches of `Grid3`.
//!
//! Layout puts frames contiguous, so the innermost loops are shifted
//! axpy/dot operations over frame rows. Work parallelizes over
//! (example, channel) pairs with disjoint output slices; batch-wide sums
//! (BN statistics, weight gradients) are reduced in a fixed order.

use rayon::prelude::*;

use super::{Grid3, LayerSpec, Mode};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[inline]
fn axpy(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += a * s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Shifted-row ranges for a frame offset `off = dl - pad_l`:
/// dst[l] op src[l + off] for l in lo..hi.
#[inline]
fn l_range(frames: usize, off: isize) -> (usize, usize) {
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi = if off > 0 {
        frames.saturating_sub(off as usize)
    } else {
        frames
    };
    (lo, hi.max(lo))
}

#[inline]
fn widx(spec: &LayerSpec, co: usize, ci: usize, dk: usize, dl: usize) -> usize {
    ((co * spec.in_channels + ci) * spec.kernel_k + dk) * spec.kernel_l + dl
}

/// Cross-correlation with symmetric same-padding along k (before the
/// stride) and along l, so `K_out = ceil(K_in / stride)` and `L_out = L_in`.
pub fn conv2d_forward(xs: &[Grid3], spec: &LayerSpec, w: &[f64], b: &[f64]) -> Vec<Grid3> {
    let pad_k = (spec.kernel_k - 1) / 2;
    let pad_l = (spec.kernel_l - 1) / 2;
    xs.par_iter()
        .map(|x| {
            let out_bins = spec.out_bins(x.bins);
            let frames = x.frames;
            let mut y = Grid3::zeros(spec.out_channels, out_bins, frames);
            y.data_mut()
                .par_chunks_mut(out_bins * frames)
                .enumerate()
                .for_each(|(co, ychan)| {
                    ychan.fill(b[co]);
                    for ci in 0..spec.in_channels {
                        for dk in 0..spec.kernel_k {
                            for dl in 0..spec.kernel_l {
                                let wv = w[widx(spec, co, ci, dk, dl)];
                                if wv == 0.0 {
                                    continue;
                                }
                                let off = dl as isize - pad_l as isize;
                                let (lo, hi) = l_range(frames, off);
                                if hi <= lo {
                                    continue;
                                }
                                let (slo, shi) =
                                    ((lo as isize + off) as usize, (hi as isize + off) as usize);
                                for ko in 0..out_bins {
                                    let ki =
                                        (ko * spec.stride_k + dk) as isize - pad_k as isize;
                                    if ki < 0 || ki >= x.bins as isize {
                                        continue;
                                    }
                                    let src = &x.row(ci, ki as usize)[slo..shi];
                                    let dst = &mut ychan[ko * frames + lo..ko * frames + hi];
                                    axpy(dst, src, wv);
                                }
                            }
                        }
                    }
                });
            y
        })
        .collect()
}

/// Gradients of `conv2d_forward`: input gradients per example, plus weight
/// and bias gradients summed over the batch in example order.
pub fn conv2d_backward(
    xs: &[Grid3],
    dys: &[Grid3],
    spec: &LayerSpec,
    w: &[f64],
) -> (Vec<Grid3>, Vec<f64>, Vec<f64>) {
    let pad_k = (spec.kernel_k - 1) / 2;
    let pad_l = (spec.kernel_l - 1) / 2;
    let wlen = spec.in_channels * spec.kernel_k * spec.kernel_l;

    let per_example: Vec<(Grid3, Vec<f64>, Vec<f64>)> = xs
        .par_iter()
        .zip(dys.par_iter())
        .map(|(x, dy)| {
            let out_bins = dy.bins;
            let frames = x.frames;

            // dx: parallel over input channels (disjoint rows).
            let mut dx = Grid3::zeros(x.channels, x.bins, frames);
            let in_bins = x.bins;
            dx.data_mut()
                .par_chunks_mut(in_bins * frames)
                .enumerate()
                .for_each(|(ci, dchan)| {
                    for co in 0..spec.out_channels {
                        for dk in 0..spec.kernel_k {
                            for dl in 0..spec.kernel_l {
                                let wv = w[widx(spec, co, ci, dk, dl)];
                                if wv == 0.0 {
                                    continue;
                                }
                                let off = dl as isize - pad_l as isize;
                                let (lo, hi) = l_range(frames, off);
                                if hi <= lo {
                                    continue;
                                }
                                let (slo, shi) =
                                    ((lo as isize + off) as usize, (hi as isize + off) as usize);
                                for ko in 0..out_bins {
                                    let ki =
                                        (ko * spec.stride_k + dk) as isize - pad_k as isize;
                                    if ki < 0 || ki >= in_bins as isize {
                                        continue;
                                    }
                                    let dyr = &dy.row(co, ko)[lo..hi];
                                    let dst = &mut dchan
                                        [ki as usize * frames + slo..ki as usize * frames + shi];
                                    axpy(dst, dyr, wv);
                                }
                            }
                        }
                    }
                });

            // dw, db: parallel over output channels (disjoint slices).
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; spec.out_channels];
            dw.par_chunks_mut(wlen)
                .zip(db.par_iter_mut())
                .enumerate()
                .for_each(|(co, (wchan, dbv))| {
                    for ko in 0..out_bins {
                        *dbv += dy.row(co, ko).iter().sum::<f64>();
                    }
                    for ci in 0..spec.in_channels {
                        for dk in 0..spec.kernel_k {
                            for dl in 0..spec.kernel_l {
                                let off = dl as isize - pad_l as isize;
                                let (lo, hi) = l_range(frames, off);
                                if hi <= lo {
                                    continue;
                                }
                                let (slo, shi) =
                                    ((lo as isize + off) as usize, (hi as isize + off) as usize);
                                let mut acc = 0.0;
                                for ko in 0..out_bins {
                                    let ki =
                                        (ko * spec.stride_k + dk) as isize - pad_k as isize;
                                    if ki < 0 || ki >= x.bins as isize {
                                        continue;
                                    }
                                    let dyr = &dy.row(co, ko)[lo..hi];
                                    let xr = &x.row(ci, ki as usize)[slo..shi];
                                    acc += dot(xr, dyr);
                                }
                                wchan[(ci * spec.kernel_k + dk) * spec.kernel_l + dl] += acc;
                            }
                        }
                    }
                });
            (dx, dw, db)
        })
        .collect();

    let mut dxs = Vec::with_capacity(per_example.len());
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; spec.out_channels];
    for (dx, dwe, dbe) in per_example {
        dxs.push(dx);
        axpy(&mut dw, &dwe, 1.0);
        axpy(&mut db, &dbe, 1.0);
    }
    (dxs, dw, db)
}

/// Fractionally-strided counterpart of `conv2d_forward`:
/// `K_out = stride * K_in`, and with transposed channel roles it is the
/// exact adjoint of the convolution with the same kernel, stride and
/// padding.
pub fn tconv2d_forward(xs: &[Grid3], spec: &LayerSpec, w: &[f64], b: &[f64]) -> Vec<Grid3> {
    let pad_k = (spec.kernel_k - 1) / 2;
    let pad_l = (spec.kernel_l - 1) / 2;
    xs.par_iter()
        .map(|x| {
            let out_bins = spec.out_bins(x.bins);
            let frames = x.frames;
            let mut y = Grid3::zeros(spec.out_channels, out_bins, frames);
            y.data_mut()
                .par_chunks_mut(out_bins * frames)
                .enumerate()
                .for_each(|(co, ychan)| {
                    ychan.fill(b[co]);
                    for ci in 0..spec.in_channels {
                        for dk in 0..spec.kernel_k {
                            for dl in 0..spec.kernel_l {
                                let wv = w[widx(spec, co, ci, dk, dl)];
                                if wv == 0.0 {
                                    continue;
                                }
                                // out[l + off] += wv * in[l]
                                let off = dl as isize - pad_l as isize;
                                let (lo, hi) = l_range(frames, off);
                                if hi <= lo {
                                    continue;
                                }
                                let (slo, shi) =
                                    ((lo as isize + off) as usize, (hi as isize + off) as usize);
                                for ko in 0..x.bins {
                                    let ki =
                                        (ko * spec.stride_k + dk) as isize - pad_k as isize;
                                    if ki < 0 || ki >= out_bins as isize {
                                        continue;
                                    }
                                    let src = &x.row(ci, ko)[lo..hi];
                                    let dst = &mut ychan
                                        [ki as usize * frames + slo..ki as usize * frames + shi];
                                    axpy(dst, src, wv);
                                }
                            }
                        }
                    }
                });
            y
        })
        .collect()
}

/// Gradients of `tconv2d_forward`.
pub fn tconv2d_backward(
    xs: &[Grid3],
    dys: &[Grid3],
    spec: &LayerSpec,
    w: &[f64],
) -> (Vec<Grid3>, Vec<f64>, Vec<f64>) {
    let pad_k = (spec.kernel_k - 1) / 2;
    let pad_l = (spec.kernel_l - 1) / 2;
    let wlen = spec.in_channels * spec.kernel_k * spec.kernel_l;

    let per_example: Vec<(Grid3, Vec<f64>, Vec<f64>)> = xs
        .par_iter()
        .zip(dys.par_iter())
        .map(|(x, dy)| {
            let out_bins = dy.bins;
            let frames = x.frames;
            let in_bins = x.bins;

            let mut dx = Grid3::zeros(x.channels, x.bins, frames);
            dx.data_mut()
                .par_chunks_mut(in_bins * frames)
                .enumerate()
                .for_each(|(ci, dchan)| {
                    for co in 0..spec.out_channels {
                        for dk in 0..spec.kernel_k {
                            for dl in 0..spec.kernel_l {
                                let wv = w[widx(spec, co, ci, dk, dl)];
                                if wv == 0.0 {
                                    continue;
                                }
                                let off = dl as isize - pad_l as isize;
                                let (lo, hi) = l_range(frames, off);
                                if hi <= lo {
                                    continue;
                                }
                                let (slo, shi) =
                                    ((lo as isize + off) as usize, (hi as isize + off) as usize);
                                for ko in 0..in_bins {
                                    let ki =
                                        (ko * spec.stride_k + dk) as isize - pad_k as isize;
                                    if ki < 0 || ki >= out_bins as isize {
                                        continue;
                                    }
                                    let dyr = &dy.row(co, ki as usize)[slo..shi];
                                    let dst = &mut dchan[ko * frames + lo..ko * frames + hi];
                                    axpy(dst, dyr, wv);
                                }
                            }
                        }
                    }
                });

            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; spec.out_channels];
            dw.par_chunks_mut(wlen)
                .zip(db.par_iter_mut())
                .enumerate()
                .for_each(|(co, (wchan, dbv))| {
                    for ko in 0..out_bins {
                        *dbv += dy.row(co, ko).iter().sum::<f64>();
                    }
                    for ci in 0..spec.in_channels {
                        for dk in 0..spec.kernel_k {
                            for dl in 0..spec.kernel_l {
                                let off = dl as isize - pad_l as isize;
                                let (lo, hi) = l_range(frames, off);
                                if hi <= lo {
                                    continue;
                                }
                                let (slo, shi) =
                                    ((lo as isize + off) as usize, (hi as isize + off) as usize);
                                let mut acc = 0.0;
                                for ko in 0..in_bins {
                                    let ki =
                                        (ko * spec.stride_k + dk) as isize - pad_k as isize;
                                    if ki < 0 || ki >= out_bins as isize {
                                        continue;
                                    }
                                    let dyr = &dy.row(co, ki as usize)[slo..shi];
                                    let xr = &x.row(ci, ko)[lo..hi];
                                    acc += dot(xr, dyr);
                                }
                                wchan[(ci * spec.kernel_k + dk) * spec.kernel_l + dl] += acc;
                            }
                        }
                    }
                });
            (dx, dw, db)
        })
        .collect();

    let mut dxs = Vec::with_capacity(per_example.len());
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; spec.out_channels];
    for (dx, dwe, dbe) in per_example {
        dxs.push(dx);
        axpy(&mut dw, &dwe, 1.0);
        axpy(&mut db, &dbe, 1.0);
    }
    (dxs, dw, db)
}

/// What batch-norm backward needs from the forward pass.
#[derive(Clone, Debug, Default)]
pub struct BnCache {
    pub x_hat: Vec<Grid3>,
    pub inv_std: Vec<f64>,
    pub valid: Vec<usize>,
}

/// Per-channel normalization over (batch, k, valid frames). Train mode uses
/// masked batch statistics and updates the running estimates with momentum
/// 0.9; eval mode applies the running estimates. Padded frames are
/// normalized with the same statistics but excluded from them.
pub fn batchnorm_forward(
    xs: &[Grid3],
    valid: &[usize],
    gamma: &[f64],
    beta: &[f64],
    run_mean: &mut [f64],
    run_var: &mut [f64],
    mode: Mode,
) -> (Vec<Grid3>, BnCache) {
    let channels = xs[0].channels;
    let bins = xs[0].bins;

    let (mean, var) = match mode {
        Mode::Train => {
            // Per-example partial sums in example order.
            let partials: Vec<(Vec<f64>, Vec<f64>)> = xs
                .par_iter()
                .zip(valid.par_iter())
                .map(|(x, &v)| {
                    let mut s1 = vec![0.0; channels];
                    let mut s2 = vec![0.0; channels];
                    for c in 0..channels {
                        for k in 0..bins {
                            let row = &x.row(c, k)[..v];
                            for t in row {
                                s1[c] += t;
                                s2[c] += t * t;
                            }
                        }
                    }
                    (s1, s2)
                })
                .collect();
            let count: usize = valid.iter().map(|v| v * bins).sum();
            let n = count.max(1) as f64;
            let mut mean = vec![0.0; channels];
            let mut sq = vec![0.0; channels];
            for (s1, s2) in partials {
                for c in 0..channels {
                    mean[c] += s1[c];
                    sq[c] += s2[c];
                }
            }
            let mut var = vec![0.0; channels];
            for c in 0..channels {
                mean[c] /= n;
                var[c] = (sq[c] / n - mean[c] * mean[c]).max(0.0);
            }
            for c in 0..channels {
                run_mean[c] = BN_MOMENTUM * run_mean[c] + (1.0 - BN_MOMENTUM) * mean[c];
                run_var[c] = BN_MOMENTUM * run_var[c] + (1.0 - BN_MOMENTUM) * var[c];
            }
            (mean, var)
        }
        Mode::Eval => (run_mean.to_vec(), run_var.to_vec()),
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let x_hat: Vec<Grid3> = xs
        .par_iter()
        .map(|x| {
            let mut h = Grid3::zeros(channels, bins, x.frames);
            for c in 0..channels {
                for k in 0..bins {
                    let src = x.row(c, k);
                    let dst = h.row_mut(c, k);
                    for (d, s) in dst.iter_mut().zip(src.iter()) {
                        *d = (s - mean[c]) * inv_std[c];
                    }
                }
            }
            h
        })
        .collect();

    let ys: Vec<Grid3> = x_hat
        .par_iter()
        .map(|h| {
            let mut y = Grid3::zeros(channels, bins, h.frames);
            for c in 0..channels {
                for k in 0..bins {
                    let src = h.row(c, k);
                    let dst = y.row_mut(c, k);
                    for (d, s) in dst.iter_mut().zip(src.iter()) {
                        *d = gamma[c] * s + beta[c];
                    }
                }
            }
            y
        })
        .collect();

    let cache = match mode {
        Mode::Train => BnCache {
            x_hat,
            inv_std,
            valid: valid.to_vec(),
        },
        Mode::Eval => BnCache::default(),
    };
    (ys, cache)
}

/// Train-mode batch-norm backward. Incoming gradients at padded frames must
/// be zero (the loss masks them), so sums over all frames equal sums over
/// valid ones.
pub fn batchnorm_backward(
    cache: &BnCache,
    dys: &[Grid3],
    gamma: &[f64],
) -> (Vec<Grid3>, Vec<f64>, Vec<f64>) {
    let channels = dys[0].channels;
    let bins = dys[0].bins;
    let mut count = 0usize;
    for &v in &cache.valid {
        count += v * bins;
    }
    let n = count.max(1) as f64;

    let partials: Vec<(Vec<f64>, Vec<f64>)> = dys
        .par_iter()
        .zip(cache.x_hat.par_iter())
        .zip(cache.valid.par_iter())
        .map(|((dy, h), &v)| {
            let mut s1 = vec![0.0; channels];
            let mut s2 = vec![0.0; channels];
            for c in 0..channels {
                for k in 0..bins {
                    let dyr = &dy.row(c, k)[..v];
                    let hr = &h.row(c, k)[..v];
                    s1[c] += dyr.iter().sum::<f64>();
                    s2[c] += dot(dyr, hr);
                }
            }
            (s1, s2)
        })
        .collect();
    let mut sum_dy = vec![0.0; channels];
    let mut sum_dy_xhat = vec![0.0; channels];
    for (s1, s2) in partials {
        for c in 0..channels {
            sum_dy[c] += s1[c];
            sum_dy_xhat[c] += s2[c];
        }
    }

    let dxs: Vec<Grid3> = dys
        .par_iter()
        .zip(cache.x_hat.par_iter())
        .zip(cache.valid.par_iter())
        .map(|((dy, h), &v)| {
            let mut dx = Grid3::zeros(channels, bins, dy.frames);
            for c in 0..channels {
                let g = gamma[c] * cache.inv_std[c];
                let m1 = sum_dy[c] / n;
                let m2 = sum_dy_xhat[c] / n;
                for k in 0..bins {
                    let dyr = dy.row(c, k);
                    let hr = h.row(c, k);
                    let dxr = dx.row_mut(c, k);
                    for l in 0..v {
                        dxr[l] = g * (dyr[l] - m1 - hr[l] * m2);
                    }
                    // padded frames: x does not enter the statistics and
                    // dy there is zero, so dx stays zero
                }
            }
            dx
        })
        .collect();

    (dxs, sum_dy_xhat, sum_dy)
}
