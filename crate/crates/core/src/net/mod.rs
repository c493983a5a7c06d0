//! From-scratch differentiable building blocks (2-D convolution, transposed
//! convolution, batch normalization, ReLU, Adam) and the online U-net that
//! emits one inverse filter per time frame.
//!
//! All arithmetic is 64-bit. Forward/backward over a mini-batch parallelize
//! across examples; every cross-example reduction (batch-norm statistics,
//! weight gradients) is summed in example order so results are bitwise
//! reproducible regardless of thread count.

mod adam;
mod checkpoint;
mod layers;
mod unet;

pub use adam::{adam_step, lr_schedule, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, tconv2d_backward,
    tconv2d_forward, BnCache, BN_EPS, BN_MOMENTUM,
};
pub use unet::{UNet, UNetTape};

use crate::error::{DerevError, Result};
use crate::rng::Rng;

/// Dense real tensor indexed (channel, bin, frame), frames contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid3 {
    data: Vec<f64>,
    pub channels: usize,
    pub bins: usize,
    pub frames: usize,
}

impl Grid3 {
    pub fn zeros(channels: usize, bins: usize, frames: usize) -> Self {
        Grid3 {
            data: vec![0.0; channels * bins * frames],
            channels,
            bins,
            frames,
        }
    }

    pub fn from_vec(data: Vec<f64>, channels: usize, bins: usize, frames: usize) -> Result<Self> {
        if data.len() != channels * bins * frames {
            return Err(DerevError::ShapeMismatch(format!(
                "grid data length {} != {}x{}x{}",
                data.len(),
                channels,
                bins,
                frames
            )));
        }
        Ok(Grid3 {
            data,
            channels,
            bins,
            frames,
        })
    }

    #[inline]
    pub fn at(&self, c: usize, k: usize, l: usize) -> f64 {
        self.data[(c * self.bins + k) * self.frames + l]
    }

    #[inline]
    pub fn set(&mut self, c: usize, k: usize, l: usize, v: f64) {
        self.data[(c * self.bins + k) * self.frames + l] = v;
    }

    /// Contiguous frame row for (channel, bin).
    #[inline]
    pub fn row(&self, c: usize, k: usize) -> &[f64] {
        let off = (c * self.bins + k) * self.frames;
        &self.data[off..off + self.frames]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, k: usize) -> &mut [f64] {
        let off = (c * self.bins + k) * self.frames;
        &mut self.data[off..off + self.frames]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.bins, self.frames)
    }

    /// Channel-axis concatenation; shapes must agree on (bins, frames).
    pub fn concat_channels(&self, other: &Grid3) -> Result<Grid3> {
        if self.bins != other.bins || self.frames != other.frames {
            return Err(DerevError::ShapeMismatch(format!(
                "concat {}x{}x{} with {}x{}x{}",
                self.channels, self.bins, self.frames, other.channels, other.bins, other.frames
            )));
        }
        let mut data = Vec::with_capacity((self.channels + other.channels) * self.bins * self.frames);
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Grid3 {
            data,
            channels: self.channels + other.channels,
            bins: self.bins,
            frames: self.frames,
        })
    }

    /// First `channels` channels as a new grid.
    pub fn take_channels(&self, channels: usize) -> Grid3 {
        assert!(channels <= self.channels);
        Grid3 {
            data: self.data[..channels * self.bins * self.frames].to_vec(),
            channels,
            bins: self.bins,
            frames: self.frames,
        }
    }

    /// Channels `from..` as a new grid.
    pub fn skip_channels(&self, from: usize) -> Grid3 {
        assert!(from <= self.channels);
        Grid3 {
            data: self.data[from * self.bins * self.frames..].to_vec(),
            channels: self.channels - from,
            bins: self.bins,
            frames: self.frames,
        }
    }
}

/// A mini-batch: examples padded along the frame axis to a common length,
/// with the true (unpadded) frame count kept for loss and batch-norm masking.
#[derive(Clone, Debug)]
pub struct Batch {
    pub examples: Vec<Grid3>,
    pub valid_frames: Vec<usize>,
}

impl Batch {
    pub fn new(examples: Vec<Grid3>, valid_frames: Vec<usize>) -> Result<Self> {
        if examples.is_empty() || examples.len() != valid_frames.len() {
            return Err(DerevError::ShapeMismatch(
                "batch needs matching example and validity lists".into(),
            ));
        }
        let (c, k, l) = examples[0].shape();
        for e in &examples {
            if e.shape() != (c, k, l) {
                return Err(DerevError::ShapeMismatch(
                    "batch examples must share a padded shape".into(),
                ));
            }
        }
        for &v in &valid_frames {
            if v == 0 || v > l {
                return Err(DerevError::ShapeMismatch(format!(
                    "valid frame count {v} out of range 1..={l}"
                )));
            }
        }
        Ok(Batch {
            examples,
            valid_frames,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    TransposedConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Linear,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One layer of the network. Strides along the frame axis are always 1;
/// `stride_k` is 1 or 2. Kernel sizes along k are odd so same-padding is
/// symmetric.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_k: usize,
    pub kernel_l: usize,
    pub stride_k: usize,
    pub batchnorm: bool,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_k % 2 == 0 {
            return Err(DerevError::Config("kernel size along k must be odd".into()));
        }
        if !(1..=2).contains(&self.stride_k) {
            return Err(DerevError::Config("stride must be 1 or 2".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(DerevError::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_k * self.kernel_l
    }

    /// Output bin count for a given input bin count.
    pub fn out_bins(&self, in_bins: usize) -> usize {
        match self.kind {
            LayerKind::Conv => in_bins.div_ceil(self.stride_k),
            LayerKind::TransposedConv => in_bins * self.stride_k,
        }
    }
}

/// Which quantity the output layer regresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Per-frame inverse filter, P_d channels, linear output.
    IFilt,
    /// LPS of the early reverberant signal, 1 channel, linear output.
    Dsm,
    /// Wiener-style ratio mask, 1 channel, sigmoid output.
    Dirm,
}

impl Head {
    pub fn tag(&self) -> &'static str {
        match self {
            Head::IFilt => "ifilt",
            Head::Dsm => "dsm",
            Head::Dirm => "dirm",
        }
    }

    pub fn parse(s: &str) -> Result<Head> {
        match s.to_ascii_lowercase().as_str() {
            "ifilt" => Ok(Head::IFilt),
            "dsm" => Ok(Head::Dsm),
            "dirm" => Ok(Head::Dirm),
            other => Err(DerevError::Config(format!(
                "unknown head '{other}' (expected ifilt, dsm or dirm)"
            ))),
        }
    }
}

/// The full network description: 11 hidden layers plus the output layer,
/// with skip concatenations between equal-resolution encoder/decoder
/// outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetSpec {
    pub layers: Vec<LayerSpec>,
    /// 1-based hidden-layer pairs (i, j): the output of hidden layer i is
    /// concatenated to the output of hidden layer j before layer j+1.
    pub skips: Vec<(usize, usize)>,
    /// For each layer (0-based), the extra source layer whose output is
    /// concatenated to its main input.
    pub skip_into: Vec<Option<usize>>,
    pub input_bins: usize,
    pub context: usize,
    pub head: Head,
    pub filter_taps: usize,
}

pub const CHANNEL_PLAN: [usize; 11] = [16, 16, 32, 32, 64, 64, 64, 32, 32, 16, 16];

impl UNetSpec {
    /// The online U-net: encoder layers 1-5 downsample by 2 along k,
    /// layer 6 is the stride-1 bottleneck, layers 7-11 upsample with
    /// transposed convolutions, and a stride-1 linear layer emits the head
    /// output. The first layer's kernel spans `context` frames; everything
    /// else is frame-local.
    pub fn online(head: Head, input_bins: usize, context: usize, filter_taps: usize) -> Result<Self> {
        if context % 2 == 0 {
            return Err(DerevError::Config("context (L_m) must be odd".into()));
        }
        if input_bins % 32 != 0 {
            return Err(DerevError::Config(format!(
                "input bins {input_bins} must be divisible by 32 (five stride-2 stages)"
            )));
        }
        let out_channels = match head {
            Head::IFilt => filter_taps,
            Head::Dsm | Head::Dirm => 1,
        };
        let out_act = match head {
            Head::IFilt | Head::Dsm => Activation::Linear,
            Head::Dirm => Activation::Sigmoid,
        };

        let plan = CHANNEL_PLAN;
        let mut layers = Vec::with_capacity(12);
        let conv = |cin, cout, kl, stride| LayerSpec {
            kind: LayerKind::Conv,
            in_channels: cin,
            out_channels: cout,
            kernel_k: 9,
            kernel_l: kl,
            stride_k: stride,
            batchnorm: true,
            activation: Activation::ReLU,
        };
        let tconv = |cin, cout| LayerSpec {
            kind: LayerKind::TransposedConv,
            in_channels: cin,
            out_channels: cout,
            kernel_k: 9,
            kernel_l: 1,
            stride_k: 2,
            batchnorm: true,
            activation: Activation::ReLU,
        };

        layers.push(conv(1, plan[0], context, 2)); // L1
        for i in 1..5 {
            layers.push(conv(plan[i - 1], plan[i], 1, 2)); // L2-L5
        }
        layers.push(conv(plan[4], plan[5], 1, 1)); // L6 bottleneck
        layers.push(tconv(plan[5], plan[6])); // L7
        layers.push(tconv(plan[6] + plan[3], plan[7])); // L8, skip from L4
        layers.push(tconv(plan[7] + plan[2], plan[8])); // L9, skip from L3
        layers.push(tconv(plan[8] + plan[1], plan[9])); // L10, skip from L2
        layers.push(tconv(plan[9] + plan[0], plan[10])); // L11, skip from L1
        layers.push(LayerSpec {
            kind: LayerKind::Conv,
            in_channels: plan[10],
            out_channels: out_channels,
            kernel_k: 9,
            kernel_l: 1,
            stride_k: 1,
            batchnorm: false,
            activation: out_act,
        });

        let skips = vec![(1, 10), (2, 9), (3, 8), (4, 7)];
        let mut skip_into = vec![None; 12];
        skip_into[7] = Some(3); // L8 input gets L4 output
        skip_into[8] = Some(2);
        skip_into[9] = Some(1);
        skip_into[10] = Some(0);

        let spec = UNetSpec {
            layers,
            skips,
            skip_into,
            input_bins,
            context,
            head,
            filter_taps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != 12 {
            return Err(DerevError::Config("expected 11 hidden layers + output".into()));
        }
        for l in &self.layers {
            l.validate()?;
        }
        // Shape trace: every skip must join equal frequency resolutions and
        // channel counts must chain.
        let bins = self.bins_per_layer();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut in_ch = if i == 0 {
                1
            } else {
                self.layers[i - 1].out_channels
            };
            if let Some(src) = self.skip_into[i] {
                let src_bins = bins[src + 1];
                let in_bins = bins[i];
                if src_bins != in_bins {
                    return Err(DerevError::Config(format!(
                        "skip into layer {i} joins {src_bins} and {in_bins} bins"
                    )));
                }
                in_ch += self.layers[src].out_channels;
            }
            if layer.in_channels != in_ch {
                return Err(DerevError::Config(format!(
                    "layer {i} expects {} input channels, gets {in_ch}",
                    layer.in_channels
                )));
            }
        }
        let expected_out = match self.head {
            Head::IFilt => self.filter_taps,
            _ => 1,
        };
        if self.layers[11].out_channels != expected_out {
            return Err(DerevError::Config("output channel count does not match head".into()));
        }
        Ok(())
    }

    /// Bin counts entering each layer, plus the final output: length 13.
    pub fn bins_per_layer(&self) -> Vec<usize> {
        let mut bins = Vec::with_capacity(13);
        let mut k = self.input_bins;
        bins.push(k);
        for l in &self.layers {
            k = l.out_bins(k);
            bins.push(k);
        }
        bins
    }

    /// Trainable parameter count (kernels, biases, batch-norm scale/shift).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weight_len()
                    + l.out_channels
                    + if l.batchnorm { 2 * l.out_channels } else { 0 }
            })
            .sum()
    }
}

/// Per-layer trainable tensors and batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub run_mean: Vec<f64>,
    pub run_var: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
}

impl ModelParams {
    /// He-uniform kernels and zero biases for the hidden layers, unit
    /// batch-norm scale. The output layer is zero-initialized: a He-scaled
    /// linear head starts the pre-clamp estimate at roughly three times the
    /// magnitude scale, the shared-bias gradient then points down, and a
    /// few optimizer steps push every cell into the output clamp where the
    /// gradient vanishes. Starting the head at zero makes the first
    /// gradients uniformly upward instead.
    pub fn init(spec: &UNetSpec, seed: u64) -> Self {
        let mut rng = Rng::seed_from(seed).fork("he-init");
        let last = spec.layers.len() - 1;
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let fan_in = (l.in_channels * l.kernel_k * l.kernel_l) as f64;
                let limit = (6.0 / fan_in).sqrt();
                let w = if i == last {
                    vec![0.0; l.weight_len()]
                } else {
                    (0..l.weight_len())
                        .map(|_| rng.range(-limit, limit))
                        .collect()
                };
                let bn = l.batchnorm;
                LayerParams {
                    w,
                    b: vec![0.0; l.out_channels],
                    gamma: if bn { vec![1.0; l.out_channels] } else { vec![] },
                    beta: if bn { vec![0.0; l.out_channels] } else { vec![] },
                    run_mean: if bn { vec![0.0; l.out_channels] } else { vec![] },
                    run_var: if bn { vec![1.0; l.out_channels] } else { vec![] },
                }
            })
            .collect();
        ModelParams { layers }
    }

    /// Round every tensor to f32 precision, matching the checkpoint
    /// encoding, so a save/load round trip is lossless.
    pub fn quantize_f32(&mut self) {
        for l in &mut self.layers {
            for t in [
                &mut l.w,
                &mut l.b,
                &mut l.gamma,
                &mut l.beta,
                &mut l.run_mean,
                &mut l.run_var,
            ] {
                for v in t.iter_mut() {
                    *v = *v as f32 as f64;
                }
            }
        }
    }
}

/// Per-layer gradient tensors, shape-matched to `ModelParams`.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                    gamma: vec![0.0; l.gamma.len()],
                    beta: vec![0.0; l.beta.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for t in [&mut l.w, &mut l.b, &mut l.gamma, &mut l.beta] {
                for v in t.iter_mut() {
                    *v *= s;
                }
            }
        }
    }
}
