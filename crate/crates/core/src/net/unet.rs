//! U-net assembly: layer stack with skip concatenations, forward in train
//! or eval mode, and exact reverse-mode backward through every layer.

use rayon::prelude::*;

use super::layers::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, tconv2d_backward,
    tconv2d_forward, BnCache,
};
use super::{
    Activation, Batch, Gradients, Grid3, LayerKind, Mode, ModelParams, UNetSpec,
};
use crate::error::{DerevError, Result};

pub struct UNet {
    pub spec: UNetSpec,
    pub params: ModelParams,
    pub mode: Mode,
}

/// Intermediate state recorded by a train-mode forward pass; backward
/// consumes it. Holding the tape is the proof a forward pass happened.
pub struct UNetTape {
    inputs: Vec<Vec<Grid3>>,
    bn: Vec<BnCache>,
    outputs_final: Vec<Grid3>,
}

impl UNet {
    pub fn new(spec: UNetSpec, seed: u64) -> Self {
        let params = ModelParams::init(&spec, seed);
        UNet {
            spec,
            params,
            mode: Mode::Train,
        }
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Forward over a batch. Train mode records a tape and updates the
    /// batch-norm running statistics; eval mode does neither.
    pub fn forward(&mut self, batch: &Batch) -> Result<(Vec<Grid3>, Option<UNetTape>)> {
        let (c0, k0, _) = batch.examples[0].shape();
        let want_c = self.spec.layers[0].in_channels;
        if c0 != want_c || k0 != self.spec.input_bins {
            return Err(DerevError::ShapeMismatch(format!(
                "expected input {want_c}x{}xL, got {c0}x{k0}xL",
                self.spec.input_bins
            )));
        }
        if self.mode == Mode::Train && batch.len() < 2 {
            return Err(DerevError::InvalidInput(
                "train-mode batch normalization needs a batch of at least 2".into(),
            ));
        }
        let train = self.mode == Mode::Train;
        let n_layers = self.spec.layers.len();

        // Outputs are retained only for layers that feed a skip
        // concatenation; everything else flows through.
        let is_skip_source: Vec<bool> = (0..n_layers)
            .map(|i| self.spec.skip_into.iter().any(|s| *s == Some(i)))
            .collect();
        let mut skip_outputs: Vec<Option<Vec<Grid3>>> = (0..n_layers).map(|_| None).collect();
        let mut tape_inputs: Vec<Vec<Grid3>> = Vec::with_capacity(n_layers);
        let mut tape_bn: Vec<BnCache> = Vec::with_capacity(n_layers);

        let mut current: Vec<Grid3> = batch.examples.clone();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let input: Vec<Grid3> = match self.spec.skip_into[i] {
                Some(src) => current
                    .iter()
                    .zip(skip_outputs[src].as_ref().expect("skip source retained").iter())
                    .map(|(main, skip)| main.concat_channels(skip))
                    .collect::<Result<_>>()?,
                None => current,
            };

            let p = &mut self.params.layers[i];
            let z = match layer.kind {
                LayerKind::Conv => conv2d_forward(&input, layer, &p.w, &p.b),
                LayerKind::TransposedConv => tconv2d_forward(&input, layer, &p.w, &p.b),
            };
            let (z, bn_cache) = if layer.batchnorm {
                batchnorm_forward(
                    &z,
                    &batch.valid_frames,
                    &p.gamma,
                    &p.beta,
                    &mut p.run_mean,
                    &mut p.run_var,
                    self.mode,
                )
            } else {
                (z, BnCache::default())
            };
            let out: Vec<Grid3> = z
                .into_par_iter()
                .map(|mut g| {
                    match layer.activation {
                        Activation::ReLU => {
                            for v in g.data_mut() {
                                if *v < 0.0 {
                                    *v = 0.0;
                                }
                            }
                        }
                        Activation::Linear => {}
                        Activation::Sigmoid => {
                            for v in g.data_mut() {
                                *v = 1.0 / (1.0 + (-*v).exp());
                            }
                        }
                    }
                    g
                })
                .collect();

            if train {
                tape_inputs.push(input);
                tape_bn.push(bn_cache);
            }
            if is_skip_source[i] {
                skip_outputs[i] = Some(out.clone());
            }
            current = out;
        }

        let tape = if train {
            Some(UNetTape {
                inputs: tape_inputs,
                bn: tape_bn,
                outputs_final: current.clone(),
            })
        } else {
            None
        };
        Ok((current, tape))
    }

    /// Eval-mode forward for a single example; a pure function of the input
    /// and parameters.
    pub fn forward_single(&mut self, x: &Grid3) -> Result<Grid3> {
        let prev = self.mode;
        self.mode = Mode::Eval;
        let frames = x.frames;
        let batch = Batch::new(vec![x.clone()], vec![frames])?;
        let result = self.forward(&batch);
        self.mode = prev;
        Ok(result?.0.into_iter().next().unwrap())
    }

    /// Exact reverse-mode gradients for every parameter, given the loss
    /// gradient at the network output (post-activation).
    pub fn backward(&self, tape: &UNetTape, dout: Vec<Grid3>) -> Result<Gradients> {
        let n_layers = self.spec.layers.len();
        if tape.inputs.len() != n_layers {
            return Err(DerevError::InvalidInput(
                "tape does not match the network".into(),
            ));
        }
        let mut grads = Gradients::zeros_like(&self.params);
        // Gradients waiting to be added to a layer's post-activation output
        // because that output was concatenated into a later layer.
        let mut pending: Vec<Option<Vec<Grid3>>> = (0..n_layers).map(|_| None).collect();

        let mut dcur = dout;
        for i in (0..n_layers).rev() {
            let layer = &self.spec.layers[i];
            let p = &self.params.layers[i];

            if let Some(extra) = pending[i].take() {
                for (d, e) in dcur.iter_mut().zip(extra.iter()) {
                    for (a, b) in d.data_mut().iter_mut().zip(e.data().iter()) {
                        *a += *b;
                    }
                }
            }

            // Activation backward.
            let dz: Vec<Grid3> = match layer.activation {
                Activation::Linear => dcur,
                Activation::ReLU => {
                    // Post-BN pre-activation sign recovered from the cache:
                    // out > 0 iff gamma * x_hat + beta > 0.
                    let cache = &tape.bn[i];
                    dcur.into_par_iter()
                        .zip(cache.x_hat.par_iter())
                        .map(|(mut d, h)| {
                            for c in 0..d.channels {
                                let (g, b) = (p.gamma[c], p.beta[c]);
                                for k in 0..d.bins {
                                    let hr = h.row(c, k);
                                    let dr = d.row_mut(c, k);
                                    for l in 0..dr.len() {
                                        if g * hr[l] + b <= 0.0 {
                                            dr[l] = 0.0;
                                        }
                                    }
                                }
                            }
                            d
                        })
                        .collect()
                }
                Activation::Sigmoid => dcur
                    .into_par_iter()
                    .zip(tape.outputs_final.par_iter())
                    .map(|(mut d, out)| {
                        for (dv, ov) in d.data_mut().iter_mut().zip(out.data().iter()) {
                            *dv *= ov * (1.0 - ov);
                        }
                        d
                    })
                    .collect(),
            };

            // Batch-norm backward.
            let dz = if layer.batchnorm {
                let (dx, dgamma, dbeta) = batchnorm_backward(&tape.bn[i], &dz, &p.gamma);
                grads.layers[i].gamma = dgamma;
                grads.layers[i].beta = dbeta;
                dx
            } else {
                dz
            };

            // Convolution backward.
            let (dinput, dw, db) = match layer.kind {
                LayerKind::Conv => conv2d_backward(&tape.inputs[i], &dz, layer, &p.w),
                LayerKind::TransposedConv => tconv2d_backward(&tape.inputs[i], &dz, layer, &p.w),
            };
            grads.layers[i].w = dw;
            grads.layers[i].b = db;

            // Split concatenated input gradients back to main and skip paths.
            match self.spec.skip_into[i] {
                Some(src) => {
                    let main_ch = if i == 0 {
                        1
                    } else {
                        self.spec.layers[i - 1].out_channels
                    };
                    let mut main = Vec::with_capacity(dinput.len());
                    let mut skip = Vec::with_capacity(dinput.len());
                    for d in dinput {
                        main.push(d.take_channels(main_ch));
                        skip.push(d.skip_channels(main_ch));
                    }
                    match pending[src].as_mut() {
                        Some(acc) => {
                            for (a, s) in acc.iter_mut().zip(skip.iter()) {
                                for (x, y) in a.data_mut().iter_mut().zip(s.data().iter()) {
                                    *x += *y;
                                }
                            }
                        }
                        None => pending[src] = Some(skip),
                    }
                    dcur = main;
                }
                None => dcur = dinput,
            }
        }
        Ok(grads)
    }

    /// Sigmoid-squashed ReLU nonnegativity check used by debug assertions:
    /// all hidden activations are nonnegative by construction.
    pub fn head(&self) -> super::Head {
        self.spec.head
    }
}
