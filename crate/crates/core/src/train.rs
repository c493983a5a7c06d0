//! Dataset synthesis, loss computation through the filtering operation, and
//! the training loop for the inverse-filter head and the two baselines.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dsp::{self, SpectralFrameSet, StftConfig, Waveform};
use crate::enhance::{self, InverseFilter, Mask};
use crate::error::{DerevError, Result};
use crate::io;
use crate::metrics::Scenario;
use crate::net::{
    adam_step, lr_schedule, save_checkpoint, AdamState, Batch, Checkpoint, Grid3, Head, Mode,
    UNet, UNetSpec,
};
use crate::rng::Rng;
use crate::room::{self, RirFilter, SceneScript};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(DerevError::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// Either a fixed RIR or a cycling scene.
#[derive(Clone, Debug)]
pub enum RirSource {
    Static(RirFilter),
    Scene(SceneScript),
}

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub id: String,
    pub clean_wav: PathBuf,
    pub rir_id: String,
    pub split: Split,
    pub q_e: usize,
    pub room: String,
    pub rt60_ms: u32,
    pub scenario: Scenario,
}

#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub stft: StftConfig,
}

impl DatasetManifest {
    /// Splits must be disjoint by both utterance and RIR.
    pub fn validate(&self) -> Result<()> {
        let mut utt: BTreeMap<String, Split> = BTreeMap::new();
        let mut rir: BTreeMap<String, Split> = BTreeMap::new();
        for e in &self.entries {
            let key = e.clean_wav.to_string_lossy().to_string();
            if let Some(prev) = utt.insert(key.clone(), e.split) {
                if prev != e.split {
                    return Err(DerevError::Config(format!(
                        "utterance {key} appears in both {} and {} splits",
                        prev.label(),
                        e.split.label()
                    )));
                }
            }
            if let Some(prev) = rir.insert(e.rir_id.clone(), e.split) {
                if prev != e.split {
                    return Err(DerevError::Config(format!(
                        "RIR {} appears in both {} and {} splits",
                        e.rir_id,
                        prev.label(),
                        e.split.label()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One synthesized example on disk.
#[derive(Clone, Debug)]
pub struct BuiltExample {
    pub id: String,
    pub split: Split,
    pub y_path: PathBuf,
    pub ye_path: PathBuf,
    pub room: String,
    pub rt60_ms: u32,
    pub scenario: Scenario,
}

#[derive(Clone, Debug, Default)]
pub struct ExampleStore {
    pub examples: Vec<BuiltExample>,
    pub stft: StftConfig,
}

impl ExampleStore {
    pub fn split(&self, split: Split) -> Vec<&BuiltExample> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }
}

/// Synthesize `(y, y^E)` pairs for every manifest entry and persist them as
/// float WAVs under `out_dir/<split>/`. Deterministic for a fixed manifest.
pub fn build_dataset(
    manifest: &DatasetManifest,
    rirs: &BTreeMap<String, RirSource>,
    out_dir: &Path,
) -> Result<ExampleStore> {
    manifest.validate()?;
    for e in &manifest.entries {
        if !e.clean_wav.exists() {
            return Err(DerevError::MissingFile(e.clean_wav.clone()));
        }
        if !rirs.contains_key(&e.rir_id) {
            return Err(DerevError::Config(format!(
                "manifest references unknown RIR '{}'",
                e.rir_id
            )));
        }
    }

    let built: Vec<Result<BuiltExample>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let clean = io::read_wav(&e.clean_wav)?;
            let (y, ye, _yl) = match rirs.get(&e.rir_id).unwrap() {
                RirSource::Static(h) => {
                    let h = h.clone().with_early_split_after_arrival(e.q_e);
                    room::convolve_static(&clean, &h)?
                }
                RirSource::Scene(scene) => {
                    let mut scene = scene.clone();
                    for r in &mut scene.rirs {
                        *r = r.clone().with_early_split_after_arrival(e.q_e);
                    }
                    room::convolve_time_varying(&clean, &scene)?
                }
            };
            let dir = out_dir.join(e.split.label());
            let y_path = dir.join(format!("{}_y.wav", e.id));
            let ye_path = dir.join(format!("{}_ye.wav", e.id));
            io::write_wav(&y_path, &y)?;
            io::write_wav(&ye_path, &ye)?;
            Ok(BuiltExample {
                id: e.id.clone(),
                split: e.split,
                y_path,
                ye_path,
                room: e.room.clone(),
                rt60_ms: e.rt60_ms,
                scenario: e.scenario,
            })
        })
        .collect();

    let mut examples = Vec::with_capacity(built.len());
    for b in built {
        examples.push(b?);
    }
    Ok(ExampleStore {
        examples,
        stft: manifest.stft,
    })
}

/// FNV-1a digest of a file, for determinism checks and the work-dir index.
pub fn file_digest(path: &Path) -> Result<u64> {
    let bytes = std::fs::read(path)?;
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    Ok(h)
}

/// Wiener-style ratio mask `|Y^E|^2 / (|Y^E|^2 + |Y^L|^2)` with a 1e-10
/// denominator floor; both-zero cells come out 0.
pub fn wiener_mask_target(y_e: &SpectralFrameSet, y_l: &SpectralFrameSet) -> Result<Mask> {
    if y_e.bins() != y_l.bins() || y_e.frames() != y_l.frames() {
        return Err(DerevError::ShapeMismatch("mask target shapes".into()));
    }
    let bins = y_e.bins();
    let frames = y_e.frames();
    let mut values = vec![0.0; bins * frames];
    for k in 0..bins {
        for l in 0..frames {
            let e2 = y_e.at(k, l).norm_sqr();
            let l2 = y_l.at(k, l).norm_sqr();
            values[k * frames + l] = e2 / (e2 + l2).max(1e-10);
        }
    }
    Mask::new(values, bins, frames)
}

/// Masked mean-square error over bin-major grids:
/// `E = (1 / (K * L_valid)) * sum (target - est)^2` over valid cells, with
/// the gradient with respect to the estimate on valid cells and zeros on
/// padding.
pub fn mse_loss(
    est: &[Vec<f64>],
    target: &[Vec<f64>],
    bins: usize,
    frames: usize,
    valid: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if est.len() != target.len() || est.len() != valid.len() {
        return Err(DerevError::ShapeMismatch("loss batch sizes".into()));
    }
    let total_valid: usize = valid.iter().sum();
    if total_valid == 0 {
        return Err(DerevError::InvalidInput("empty valid mask".into()));
    }
    let norm = 1.0 / (bins * total_valid) as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(est.len());
    for ((e, t), &v) in est.iter().zip(target.iter()).zip(valid.iter()) {
        if e.len() != bins * frames || t.len() != bins * frames {
            return Err(DerevError::ShapeMismatch("loss grid sizes".into()));
        }
        let mut g = vec![0.0; bins * frames];
        for k in 0..bins {
            for l in 0..v {
                let i = k * frames + l;
                let d = t[i] - e[i];
                loss += d * d;
                g[i] = -2.0 * norm * d;
            }
        }
        grads.push(g);
    }
    Ok((loss * norm, grads))
}

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub context: usize,
    pub filter_taps: usize,
    pub q_e: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            context: 5,
            filter_taps: 9,
            q_e: 32,
            initial_lr: 0.001,
            seed: 1,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.filter_taps == 0 {
            return Err(DerevError::Config("epochs, batch size and P_d must be positive".into()));
        }
        if self.context % 2 == 0 {
            return Err(DerevError::Config("L_m must be odd".into()));
        }
        if self.initial_lr <= 0.0 {
            return Err(DerevError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Features for one utterance, kept in memory during training.
pub struct PreparedExample {
    /// Net input: LPS of the reverberant signal, bins 0..K-2 (the Nyquist
    /// bin bypasses the network), shape 1 x (K-1) x L.
    pub input: Grid3,
    /// |Y| over all K bins, bin-major.
    pub reverb_mag: Vec<f64>,
    /// Head target over all K bins, bin-major: |Y^E| for iFilt, LPS(Y^E)
    /// for DSM, the Wiener mask for dIRM.
    pub target: Vec<f64>,
    /// For DSM/dIRM: the fixed Nyquist-row estimate (pass-through).
    pub nyquist_row: Vec<f64>,
    pub frames: usize,
}

pub fn prepare_example(
    y: &Waveform,
    ye: &Waveform,
    cfg: &StftConfig,
    head: Head,
) -> Result<PreparedExample> {
    let spec_y = dsp::stft(y, cfg)?;
    let spec_ye = dsp::stft(ye, cfg)?;
    let bins = spec_y.bins();
    let frames = spec_y.frames();
    let net_bins = bins - 1;

    let v = dsp::lps(&spec_y);
    let mut input = Grid3::zeros(1, net_bins, frames);
    for k in 0..net_bins {
        input
            .row_mut(0, k)
            .copy_from_slice(&v.values[k * frames..(k + 1) * frames]);
    }
    let reverb_mag = spec_y.magnitudes();

    let (target, nyquist_row) = match head {
        Head::IFilt => {
            let t = spec_ye.magnitudes();
            // identity filter at the Nyquist bin: estimate = |Y|
            let ny = reverb_mag[net_bins * frames..].to_vec();
            (t, ny)
        }
        Head::Dsm => {
            let t = dsp::lps(&spec_ye).values;
            let ny = v.values[net_bins * frames..].to_vec();
            (t, ny)
        }
        Head::Dirm => {
            // Y^L = Y - Y^E by STFT linearity
            let mut spec_yl = SpectralFrameSet::zeros(*cfg, frames);
            for k in 0..bins {
                for l in 0..frames {
                    spec_yl.set(k, l, spec_y.at(k, l) - spec_ye.at(k, l));
                }
            }
            let mask = wiener_mask_target(&spec_ye, &spec_yl)?;
            (mask.values, vec![1.0; frames])
        }
    };

    Ok(PreparedExample {
        input,
        reverb_mag,
        target,
        nyquist_row,
        frames,
    })
}

/// Pad a set of prepared inputs to the batch maximum frame count.
fn pad_batch(examples: &[&PreparedExample]) -> Batch {
    let max_l = examples.iter().map(|e| e.frames).max().unwrap();
    let (c, k, _) = examples[0].input.shape();
    let padded: Vec<Grid3> = examples
        .iter()
        .map(|e| {
            if e.frames == max_l {
                e.input.clone()
            } else {
                let mut g = Grid3::zeros(c, k, max_l);
                for ch in 0..c {
                    for kb in 0..k {
                        g.row_mut(ch, kb)[..e.frames].copy_from_slice(e.input.row(ch, kb));
                    }
                }
                g
            }
        })
        .collect();
    let valid = examples.iter().map(|e| e.frames).collect();
    Batch::new(padded, valid).expect("padded batch is well-formed")
}

/// Pad a bin-major grid (bins x frames) to `frames_to` frames.
fn pad_grid(grid: &[f64], bins: usize, frames: usize, frames_to: usize) -> Vec<f64> {
    if frames == frames_to {
        return grid.to_vec();
    }
    let mut out = vec![0.0; bins * frames_to];
    for k in 0..bins {
        out[k * frames_to..k * frames_to + frames]
            .copy_from_slice(&grid[k * frames..(k + 1) * frames]);
    }
    out
}

/// Head application: turn net outputs into target-domain estimates.
/// Returns per-example estimate grids over all K bins plus whatever the
/// backward pass needs.
struct HeadForward {
    est: Vec<Vec<f64>>,
    pre_clamp: Vec<Vec<f64>>,
    stacks: Vec<Grid3>,
    bins: usize,
    frames: usize,
}

fn head_forward(
    head: Head,
    net_out: &[Grid3],
    examples: &[&PreparedExample],
    taps: usize,
) -> HeadForward {
    let (_, net_bins, frames) = net_out[0].shape();
    let bins = net_bins + 1;
    let mut est = Vec::with_capacity(net_out.len());
    let mut pre_clamp = Vec::with_capacity(net_out.len());
    let mut stacks = Vec::with_capacity(net_out.len());

    for (out, ex) in net_out.iter().zip(examples.iter()) {
        match head {
            Head::IFilt => {
                let mag = pad_grid(&ex.reverb_mag, bins, ex.frames, frames);
                let stack = enhance::shifted_magnitude_stack(&mag, bins, frames, taps);
                // Full filter: net rows for k < net_bins, identity at Nyquist.
                let mut w = Grid3::zeros(taps, bins, frames);
                for p in 0..taps {
                    for k in 0..net_bins {
                        w.row_mut(p, k).copy_from_slice(out.row(p, k));
                    }
                }
                w.row_mut(0, net_bins).fill(1.0);
                let w = InverseFilter::new(w).expect("finite filter");
                let (mag_est, pre) =
                    enhance::apply_inverse_filter(&stack, &w).expect("shapes match");
                est.push(mag_est);
                pre_clamp.push(pre);
                stacks.push(stack);
            }
            Head::Dsm | Head::Dirm => {
                let mut e = vec![0.0; bins * frames];
                for k in 0..net_bins {
                    e[k * frames..(k + 1) * frames].copy_from_slice(out.row(0, k));
                }
                e[net_bins * frames..net_bins * frames + ex.frames]
                    .copy_from_slice(&ex.nyquist_row);
                est.push(e);
                pre_clamp.push(Vec::new());
                stacks.push(Grid3::zeros(0, 0, 0));
            }
        }
    }
    HeadForward {
        est,
        pre_clamp,
        stacks,
        bins,
        frames,
    }
}

/// Gradient of the head output with respect to the network output.
fn head_backward(head: Head, hf: &HeadForward, dest: &[Vec<f64>], taps: usize) -> Vec<Grid3> {
    let bins = hf.bins;
    let net_bins = bins - 1;
    let frames = hf.frames;
    dest.iter()
        .enumerate()
        .map(|(i, g)| match head {
            Head::IFilt => {
                let mut dnet = Grid3::zeros(taps, net_bins, frames);
                let pre = &hf.pre_clamp[i];
                let stack = &hf.stacks[i];
                for p in 0..taps {
                    for k in 0..net_bins {
                        let s = stack.row(p, k);
                        let dst = dnet.row_mut(p, k);
                        let gk = &g[k * frames..(k + 1) * frames];
                        let pk = &pre[k * frames..(k + 1) * frames];
                        for l in 0..frames {
                            // subgradient 1 at the clamp boundary, so a
                            // zero-initialized head still receives gradient
                            if pk[l] >= 0.0 {
                                dst[l] = gk[l] * s[l];
                            }
                        }
                    }
                }
                dnet
            }
            Head::Dsm | Head::Dirm => {
                let mut dnet = Grid3::zeros(1, net_bins, frames);
                for k in 0..net_bins {
                    dnet.row_mut(0, k)
                        .copy_from_slice(&g[k * frames..(k + 1) * frames]);
                }
                dnet
            }
        })
        .collect()
}

/// Pad targets to the batch frame count.
fn padded_targets(examples: &[&PreparedExample], bins: usize, frames: usize) -> Vec<Vec<f64>> {
    examples
        .iter()
        .map(|e| pad_grid(&e.target, bins, e.frames, frames))
        .collect()
}

pub struct TrainOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub log_path: PathBuf,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
}

/// Loss of a whole split in eval mode.
fn split_loss(
    net: &mut UNet,
    prepared: &[PreparedExample],
    head: Head,
    taps: usize,
) -> Result<f64> {
    if prepared.is_empty() {
        return Err(DerevError::InvalidInput("empty split".into()));
    }
    let mut total = 0.0;
    let mut total_cells = 0usize;
    for ex in prepared {
        let refs = [ex];
        let batch = pad_batch(&refs);
        let (out, _) = net.forward(&batch)?;
        let hf = head_forward(head, &out, &refs, taps);
        let targets = padded_targets(&refs, hf.bins, hf.frames);
        let (loss, _) = mse_loss(&hf.est, &targets, hf.bins, hf.frames, &batch.valid_frames)?;
        // re-weight to a global per-cell mean
        let cells = hf.bins * ex.frames;
        total += loss * cells as f64;
        total_cells += cells;
    }
    Ok(total / total_cells as f64)
}

/// Train one head. The loss for iFilt flows through the magnitude stack
/// multiply-sum and the output clamp; DSM and dIRM regress LPS and mask
/// targets directly. Returns the checkpoint paths and the loss history in
/// the CSV log.
pub fn train(
    cfg: &TrainConfig,
    store: &ExampleStore,
    head: Head,
    out_dir: &Path,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let stft_cfg = store.stft;
    let net_bins = stft_cfg.bins() - 1;

    let load_split = |split: Split| -> Result<Vec<PreparedExample>> {
        store
            .split(split)
            .par_iter()
            .map(|e| {
                let y = io::read_wav(&e.y_path)?;
                let ye = io::read_wav(&e.ye_path)?;
                prepare_example(&y, &ye, &stft_cfg, head)
            })
            .collect()
    };
    // The test split is never touched here; only train/validation features
    // are materialized.
    let train_set = load_split(Split::Train)?;
    let val_set = load_split(Split::Validation)?;
    if train_set.is_empty() {
        return Err(DerevError::InvalidInput("no training examples".into()));
    }

    let spec = UNetSpec::online(head, net_bins, cfg.context, cfg.filter_taps)?;
    let (mut net, mut adam, mut rng, start_epoch) = match resume {
        Some(ckpt) => {
            if ckpt.head != head {
                return Err(DerevError::Checkpoint(format!(
                    "checkpoint is for head {}, requested {}",
                    ckpt.head.tag(),
                    head.tag()
                )));
            }
            let spec = ckpt.spec()?;
            let mut net = UNet::new(spec, ckpt.seed);
            net.params = ckpt.params.clone();
            (
                net,
                ckpt.adam.clone(),
                Rng::from_state(ckpt.rng_state),
                ckpt.epoch as usize + 1,
            )
        }
        None => {
            let net = UNet::new(spec, cfg.seed);
            let adam = AdamState::new(&net.params);
            let rng = Rng::seed_from(cfg.seed).fork("train-shuffle");
            (net, adam, rng, 0)
        }
    };

    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join(format!("train_{}.csv", head.tag()));
    let mut log = std::fs::File::create(&log_path)?;
    writeln!(log, "epoch,split,loss,lr")?;

    let best_path = out_dir.join(format!("{}_best.ckpt", head.tag()));
    let last_path = out_dir.join(format!("{}_last.ckpt", head.tag()));

    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut initial_train_loss = f64::NAN;
    let mut final_train_loss = f64::NAN;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in start_epoch..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.initial_lr);
        rng.shuffle(&mut order);

        // Chunk into batches; a trailing single example joins the previous
        // batch so train-mode batch norm always sees at least two.
        let mut batches: Vec<Vec<usize>> =
            order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
        if batches.len() > 1 && batches.last().unwrap().len() == 1 {
            let last = batches.pop().unwrap();
            batches.last_mut().unwrap().extend(last);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_cells = 0usize;
        for idxs in &batches {
            let refs: Vec<&PreparedExample> = idxs.iter().map(|&i| &train_set[i]).collect();
            let batch = pad_batch(&refs);
            net.set_mode(Mode::Train);
            let (out, tape) = net.forward(&batch)?;
            let hf = head_forward(head, &out, &refs, cfg.filter_taps);
            let targets = padded_targets(&refs, hf.bins, hf.frames);
            let (loss, dest) =
                mse_loss(&hf.est, &targets, hf.bins, hf.frames, &batch.valid_frames)?;
            if !loss.is_finite() {
                return Err(DerevError::Divergence(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            let cells: usize = batch.valid_frames.iter().map(|v| v * hf.bins).sum();
            epoch_loss += loss * cells as f64;
            epoch_cells += cells;

            let dnet = head_backward(head, &hf, &dest, cfg.filter_taps);
            let grads = net.backward(&tape.unwrap(), dnet)?;
            adam_step(&mut net.params, &grads, &mut adam, lr);
            // Parameters live at f32 precision so that checkpoint
            // round-trips are exact; compute stays f64.
            net.params.quantize_f32();
            adam.quantize_f32();
        }
        let train_loss = epoch_loss / epoch_cells as f64;
        if epoch == start_epoch {
            initial_train_loss = train_loss;
        }
        final_train_loss = train_loss;

        net.set_mode(Mode::Eval);
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            split_loss(&mut net, &val_set, head, cfg.filter_taps)?
        };

        writeln!(log, "{epoch},train,{train_loss:.9},{lr:.9}")?;
        writeln!(log, "{epoch},validation,{val_loss:.9},{lr:.9}")?;

        let mut ckpt = Checkpoint {
            head,
            input_bins: net_bins,
            context: cfg.context,
            filter_taps: cfg.filter_taps,
            epoch: epoch as u32,
            seed: cfg.seed,
            rng_state: rng.state(),
            params: net.params.clone(),
            adam: adam.clone(),
        };
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            save_checkpoint(&best_path, &mut ckpt)?;
        }
        if epoch % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs {
            save_checkpoint(&last_path, &mut ckpt)?;
        }
    }

    Ok(TrainOutcome {
        epochs_run: cfg.epochs - start_epoch,
        best_epoch,
        best_val_loss: best_val,
        initial_train_loss,
        final_train_loss,
        log_path,
        best_checkpoint: best_path,
        last_checkpoint: last_path,
    })
}

/// Validation loss of a checkpoint over a split, in eval mode. Used by the
/// checkpoint round-trip invariant: parameters live at f32 precision, so a
/// reloaded checkpoint reproduces the recorded loss bit for bit.
pub fn checkpoint_split_loss(
    ckpt: &Checkpoint,
    store: &ExampleStore,
    split: Split,
) -> Result<f64> {
    let mut net = UNet::new(ckpt.spec()?, 0);
    net.params = ckpt.params.clone();
    net.set_mode(Mode::Eval);
    let prepared: Vec<PreparedExample> = store
        .split(split)
        .iter()
        .map(|e| {
            let y = io::read_wav(&e.y_path)?;
            let ye = io::read_wav(&e.ye_path)?;
            prepare_example(&y, &ye, &store.stft, ckpt.head)
        })
        .collect::<Result<_>>()?;
    split_loss(&mut net, &prepared, ckpt.head, ckpt.filter_taps)
}

/// Loss of the unprocessed reverberant magnitude against the early target:
/// what the iFilt head produces when the network output is forced to the
/// identity filter.
pub fn identity_baseline_loss(store: &ExampleStore, split: Split) -> Result<f64> {
    let cfg = store.stft;
    let mut total = 0.0;
    let mut cells = 0usize;
    for e in store.split(split) {
        let y = io::read_wav(&e.y_path)?;
        let ye = io::read_wav(&e.ye_path)?;
        let ex = prepare_example(&y, &ye, &cfg, Head::IFilt)?;
        let bins = cfg.bins();
        let (loss, _) = mse_loss(
            &[ex.reverb_mag.clone()],
            &[ex.target.clone()],
            bins,
            ex.frames,
            &[ex.frames],
        )?;
        total += loss * (bins * ex.frames) as f64;
        cells += bins * ex.frames;
    }
    if cells == 0 {
        return Err(DerevError::InvalidInput("empty split".into()));
    }
    Ok(total / cells as f64)
}
