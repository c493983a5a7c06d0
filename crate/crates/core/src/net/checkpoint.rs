//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian, all tensors 32-bit floats):
//!
//! ```text
//! magic     8 bytes  "DRVCKPT1"
//! head      u8       0 = ifilt, 1 = dsm, 2 = dirm
//! input_bins, context, filter_taps, epoch   u32 each
//! adam_step u64
//! seed      u64
//! rng_state 4 x u64
//! n_layers  u32
//! per layer, in order: w, b, gamma, beta, run_mean, run_var,
//!   then Adam moments w_m, w_v, b_m, b_v, gamma_m, gamma_v, beta_m, beta_v;
//!   each tensor as u32 length prefix + length x f32
//! ```
//!
//! Parameters are quantized to f32 in memory at save time, so saving and
//! reloading reproduces the live model bit-for-bit.

use std::io::{Read, Write};
use std::path::Path;

use super::{AdamState, Head, ModelParams, UNetSpec};
use crate::error::{DerevError, Result};

const MAGIC: &[u8; 8] = b"DRVCKPT1";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub head: Head,
    pub input_bins: usize,
    pub context: usize,
    pub filter_taps: usize,
    pub epoch: u32,
    pub seed: u64,
    pub rng_state: [u64; 4],
    pub params: ModelParams,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn spec(&self) -> Result<UNetSpec> {
        UNetSpec::online(self.head, self.input_bins, self.context, self.filter_taps)
    }
}

fn write_tensor(out: &mut Vec<u8>, t: &[f64]) {
    out.extend_from_slice(&(t.len() as u32).to_le_bytes());
    for &v in t {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn read_tensor(buf: &[u8], pos: &mut usize, expect: usize, what: &str) -> Result<Vec<f64>> {
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > buf.len() {
            return Err(DerevError::Checkpoint(format!(
                "truncated checkpoint while reading {what}"
            )));
        }
        let s = &buf[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let len = u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()) as usize;
    if len != expect {
        return Err(DerevError::Checkpoint(format!(
            "{what}: expected {expect} values, found {len}"
        )));
    }
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        let b: [u8; 4] = take(pos, 4)?.try_into().unwrap();
        v.push(f32::from_le_bytes(b) as f64);
    }
    Ok(v)
}

/// Quantizes the checkpoint's tensors to f32 precision in place, then
/// writes it. The caller keeps the quantized copy, so reloading yields an
/// identical model.
pub fn save_checkpoint(path: &Path, ckpt: &mut Checkpoint) -> Result<()> {
    ckpt.params.quantize_f32();
    ckpt.adam.quantize_f32();

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(match ckpt.head {
        Head::IFilt => 0,
        Head::Dsm => 1,
        Head::Dirm => 2,
    });
    for v in [
        ckpt.input_bins as u32,
        ckpt.context as u32,
        ckpt.filter_taps as u32,
        ckpt.epoch,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&ckpt.adam.step.to_le_bytes());
    out.extend_from_slice(&ckpt.seed.to_le_bytes());
    for s in ckpt.rng_state {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&(ckpt.params.layers.len() as u32).to_le_bytes());
    for (p, m) in ckpt.params.layers.iter().zip(ckpt.adam.m.iter()) {
        for t in [&p.w, &p.b, &p.gamma, &p.beta, &p.run_mean, &p.run_var] {
            write_tensor(&mut out, t);
        }
        for t in [&m.w_m, &m.w_v, &m.b_m, &m.b_v, &m.g_m, &m.g_v, &m.be_m, &m.be_v] {
            write_tensor(&mut out, t);
        }
    }

    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&out)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(DerevError::MissingFile(path.to_path_buf()));
    }
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 8 + 1 + 16 + 8 + 8 + 32 + 4 || &buf[..8] != MAGIC {
        return Err(DerevError::Checkpoint(format!(
            "{} is not a derev checkpoint",
            path.display()
        )));
    }
    let mut pos = 8usize;
    let head = match buf[pos] {
        0 => Head::IFilt,
        1 => Head::Dsm,
        2 => Head::Dirm,
        other => {
            return Err(DerevError::Checkpoint(format!("unknown head tag {other}")));
        }
    };
    pos += 1;
    let read_u32 = |pos: &mut usize| {
        let v = u32::from_le_bytes(buf[*pos..*pos + 4].try_into().unwrap());
        *pos += 4;
        v
    };
    let input_bins = read_u32(&mut pos) as usize;
    let context = read_u32(&mut pos) as usize;
    let filter_taps = read_u32(&mut pos) as usize;
    let epoch = read_u32(&mut pos);
    let read_u64 = |pos: &mut usize| {
        let v = u64::from_le_bytes(buf[*pos..*pos + 8].try_into().unwrap());
        *pos += 8;
        v
    };
    let step = read_u64(&mut pos);
    let seed = read_u64(&mut pos);
    let rng_state = [
        read_u64(&mut pos),
        read_u64(&mut pos),
        read_u64(&mut pos),
        read_u64(&mut pos),
    ];
    let spec = UNetSpec::online(head, input_bins, context, filter_taps)?;
    let n_layers = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    if n_layers != spec.layers.len() {
        return Err(DerevError::Checkpoint(format!(
            "layer count {n_layers} does not match the architecture"
        )));
    }

    let mut params = ModelParams { layers: Vec::new() };
    let mut adam = AdamState { m: Vec::new(), step };
    for l in &spec.layers {
        let bn = if l.batchnorm { l.out_channels } else { 0 };
        let w = read_tensor(&buf, &mut pos, l.weight_len(), "kernel")?;
        let b = read_tensor(&buf, &mut pos, l.out_channels, "bias")?;
        let gamma = read_tensor(&buf, &mut pos, bn, "bn scale")?;
        let beta = read_tensor(&buf, &mut pos, bn, "bn shift")?;
        let run_mean = read_tensor(&buf, &mut pos, bn, "bn mean")?;
        let run_var = read_tensor(&buf, &mut pos, bn, "bn var")?;
        let w_m = read_tensor(&buf, &mut pos, l.weight_len(), "adam w_m")?;
        let w_v = read_tensor(&buf, &mut pos, l.weight_len(), "adam w_v")?;
        let b_m = read_tensor(&buf, &mut pos, l.out_channels, "adam b_m")?;
        let b_v = read_tensor(&buf, &mut pos, l.out_channels, "adam b_v")?;
        let g_m = read_tensor(&buf, &mut pos, bn, "adam g_m")?;
        let g_v = read_tensor(&buf, &mut pos, bn, "adam g_v")?;
        let be_m = read_tensor(&buf, &mut pos, bn, "adam be_m")?;
        let be_v = read_tensor(&buf, &mut pos, bn, "adam be_v")?;
        params.layers.push(super::LayerParams {
            w,
            b,
            gamma,
            beta,
            run_mean,
            run_var,
        });
        adam.m.push(super::adam::TensorMoments {
            w_m,
            w_v,
            b_m,
            b_v,
            g_m,
            g_v,
            be_m,
            be_v,
        });
    }

    Ok(Checkpoint {
        head,
        input_bins,
        context,
        filter_taps,
        epoch,
        seed,
        rng_state,
        params,
        adam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("derev-ckpt-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_identical() {
        let spec = UNetSpec::online(Head::IFilt, 256, 5, 9).unwrap();
        let params = ModelParams::init(&spec, 31);
        let adam = AdamState::new(&params);
        let mut ckpt = Checkpoint {
            head: Head::IFilt,
            input_bins: 256,
            context: 5,
            filter_taps: 9,
            epoch: 17,
            seed: 31,
            rng_state: [1, 2, 3, 4],
            params,
            adam,
        };
        let p = tmp("rt.ckpt");
        save_checkpoint(&p, &mut ckpt).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded.epoch, 17);
        assert_eq!(loaded.rng_state, [1, 2, 3, 4]);
        assert_eq!(loaded.params, ckpt.params); // quantized copy matches disk
        assert_eq!(loaded.adam.step, 0);

        // Saving the loaded checkpoint again produces identical bytes.
        let p2 = tmp("rt2.ckpt");
        let mut again = loaded;
        save_checkpoint(&p2, &mut again).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_garbage() {
        let p = tmp("bad.ckpt");
        std::fs::write(&p, b"not a checkpoint at all").unwrap();
        assert!(matches!(
            load_checkpoint(&p),
            Err(DerevError::Checkpoint(_))
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_checkpoint(std::path::Path::new("/no/such/file.ckpt")),
            Err(DerevError::MissingFile(_))
        ));
    }
}
