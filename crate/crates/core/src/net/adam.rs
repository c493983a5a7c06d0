//! Bias-corrected Adam and the step-decay learning-rate schedule.

use super::{Gradients, ModelParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators mirroring the parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<TensorMoments>,
    pub step: u64,
}

#[derive(Clone, Debug, Default)]
pub struct TensorMoments {
    pub w_m: Vec<f64>,
    pub w_v: Vec<f64>,
    pub b_m: Vec<f64>,
    pub b_v: Vec<f64>,
    pub g_m: Vec<f64>,
    pub g_v: Vec<f64>,
    pub be_m: Vec<f64>,
    pub be_v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params
                .layers
                .iter()
                .map(|l| TensorMoments {
                    w_m: vec![0.0; l.w.len()],
                    w_v: vec![0.0; l.w.len()],
                    b_m: vec![0.0; l.b.len()],
                    b_v: vec![0.0; l.b.len()],
                    g_m: vec![0.0; l.gamma.len()],
                    g_v: vec![0.0; l.gamma.len()],
                    be_m: vec![0.0; l.beta.len()],
                    be_v: vec![0.0; l.beta.len()],
                })
                .collect(),
            step: 0,
        }
    }

    pub fn quantize_f32(&mut self) {
        for t in &mut self.m {
            for v in [
                &mut t.w_m, &mut t.w_v, &mut t.b_m, &mut t.b_v, &mut t.g_m, &mut t.g_v,
                &mut t.be_m, &mut t.be_v,
            ] {
                for x in v.iter_mut() {
                    *x = *x as f32 as f64;
                }
            }
        }
    }
}

fn update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, t: f64) {
    let bc1 = 1.0 - ADAM_BETA1.powf(t);
    let bc2 = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// One optimizer step over every tensor.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as f64;
    for ((p, g), m) in params
        .layers
        .iter_mut()
        .zip(grads.layers.iter())
        .zip(state.m.iter_mut())
    {
        update(&mut p.w, &g.w, &mut m.w_m, &mut m.w_v, lr, t);
        update(&mut p.b, &g.b, &mut m.b_m, &mut m.b_v, lr, t);
        update(&mut p.gamma, &g.gamma, &mut m.g_m, &mut m.g_v, lr, t);
        update(&mut p.beta, &g.beta, &mut m.be_m, &mut m.be_v, lr, t);
    }
}

/// `lr = lr0 * 0.9^floor(epoch / 10)`: a 10% cut every 10 epochs.
pub fn lr_schedule(epoch: usize, initial_lr: f64) -> f64 {
    initial_lr * 0.9f64.powi((epoch / 10) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 0.001), 0.001);
        assert_eq!(lr_schedule(9, 0.001), 0.001);
        assert!((lr_schedule(10, 0.001) - 0.0009).abs() < 1e-15);
        assert!((lr_schedule(25, 0.001) - 0.00081).abs() < 1e-15);
    }

    fn scalar_setup() -> (ModelParams, Gradients, AdamState) {
        let params = ModelParams {
            layers: vec![super::super::LayerParams {
                w: vec![0.0],
                b: vec![],
                gamma: vec![],
                beta: vec![],
                run_mean: vec![],
                run_var: vec![],
            }],
        };
        let grads = Gradients {
            layers: vec![super::super::LayerGrads {
                w: vec![1.0],
                b: vec![],
                gamma: vec![],
                beta: vec![],
            }],
        };
        let state = AdamState::new(&params);
        (params, grads, state)
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Hand evaluation: m_hat = v_hat = 1 at t=1 for g=1, so the update is
        // -lr / (1 + eps) ~ -lr.
        let (mut params, grads, mut state) = scalar_setup();
        adam_step(&mut params, &grads, &mut state, 0.001);
        let got = params.layers[0].w[0];
        assert!((got + 0.001).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let (mut params, mut grads, mut state) = scalar_setup();
        grads.layers[0].w[0] = 0.0;
        for _ in 0..100 {
            adam_step(&mut params, &grads, &mut state, 0.01);
        }
        assert_eq!(params.layers[0].w[0], 0.0);
    }

    #[test]
    fn deterministic_runs() {
        let (mut p1, grads, mut s1) = scalar_setup();
        let (mut p2, _, mut s2) = scalar_setup();
        for _ in 0..50 {
            adam_step(&mut p1, &grads, &mut s1, 0.003);
            adam_step(&mut p2, &grads, &mut s2, 0.003);
        }
        assert_eq!(p1.layers[0].w[0].to_bits(), p2.layers[0].w[0].to_bits());
    }
}
