//! End-to-end commands behind the CLI: RIR simulation, dataset building,
//! training, enhancement, evaluation and report generation. Everything
//! lands under the work directory, guarded by a lock file, with an index of
//! artifact digests refreshed after each command.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ProjectConfig;
use crate::dsp::{self, StftConfig, Waveform};
use crate::enhance::{self, InverseFilter};
use crate::error::{DerevError, Result};
use crate::io;
use crate::metrics::{self, report as metric_report, Scenario, UtteranceScore};
use crate::net::{load_checkpoint, Checkpoint, Grid3, Head, Mode, UNet};
use crate::rng::Rng;
use crate::room::{self, MaxOrder, RirFilter, RoomSpec, SceneScript};
use crate::train::{
    self, BuiltExample, DatasetManifest, ExampleStore, ManifestEntry, RirSource, Split,
    TrainOutcome,
};

/// Guard file preventing concurrent mutation of a work directory; removed
/// on drop.
pub struct WorkDirLock {
    path: PathBuf,
}

impl WorkDirLock {
    pub fn acquire(work_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(work_dir)?;
        let path = work_dir.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(WorkDirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(DerevError::WorkDirLocked(path))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WorkDirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn room_label(idx: usize) -> String {
    format!("room{}", idx + 1)
}

#[derive(Clone, Debug)]
pub struct StoredRir {
    pub id: String,
    pub wav_path: PathBuf,
    pub room: String,
    pub rt60_ms: u32,
    pub split: Split,
}

#[derive(Clone, Debug)]
pub struct StoredScene {
    pub id: String,
    pub rir_ids: Vec<String>,
    pub switch_period: f64,
    pub room: String,
    pub rt60_ms: u32,
}

#[derive(Clone, Debug, Default)]
pub struct RirStore {
    pub rirs: Vec<StoredRir>,
    pub scenes: Vec<StoredScene>,
}

impl RirStore {
    pub fn split(&self, split: Split) -> Vec<&StoredRir> {
        self.rirs.iter().filter(|r| r.split == split).collect()
    }

    pub fn load_filter(&self, id: &str, sample_rate: u32) -> Result<RirFilter> {
        let entry = self
            .rirs
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| DerevError::Config(format!("unknown RIR '{id}'")))?;
        let wav = io::read_wav(&entry.wav_path)?;
        RirFilter::new(wav.samples, sample_rate, 1)
    }
}

fn rir_dir(cfg: &ProjectConfig) -> PathBuf {
    cfg.work_dir.join("rirs")
}

fn dataset_dir(cfg: &ProjectConfig) -> PathBuf {
    cfg.work_dir.join("dataset")
}

fn checkpoints_dir(cfg: &ProjectConfig) -> PathBuf {
    cfg.work_dir.join("checkpoints")
}

fn eval_dir(cfg: &ProjectConfig) -> PathBuf {
    cfg.work_dir.join("eval")
}

/// Simulate the configured RIR grid (rooms x RT60s x positions per split),
/// write each RIR as a float WAV plus a metadata sidecar, and define the
/// time-varying test scenes. Fully deterministic for a fixed config/seed.
pub fn simulate_rirs(cfg: &ProjectConfig) -> Result<RirStore> {
    cfg.validate()?;
    let _lock = WorkDirLock::acquire(&cfg.work_dir)?;
    let dir = rir_dir(cfg);
    std::fs::create_dir_all(&dir)?;

    struct Job {
        id: String,
        room_idx: usize,
        rt60_ms: u32,
        split: Split,
        seed_tag: String,
    }
    let mut jobs = Vec::new();
    for (room_idx, _) in cfg.rirs.rooms.iter().enumerate() {
        for &rt60_ms in &cfg.rirs.rt60s_ms {
            let mut push = |split: Split, count: usize| {
                for p in 0..count {
                    let id = format!(
                        "{}_rt{:04}_{}_p{p:02}",
                        room_label(room_idx),
                        rt60_ms,
                        split.label()
                    );
                    jobs.push(Job {
                        seed_tag: id.clone(),
                        id,
                        room_idx,
                        rt60_ms,
                        split,
                    });
                }
            };
            if room_idx < cfg.rirs.train_rooms {
                push(Split::Train, cfg.rirs.train_positions);
                push(Split::Validation, cfg.rirs.validation_positions);
            }
            push(Split::Test, cfg.rirs.test_positions);
        }
    }

    let base = Rng::seed_from(cfg.train.seed);
    let built: Vec<Result<StoredRir>> = jobs
        .par_iter()
        .map(|job| {
            let dims = cfg.rirs.rooms[job.room_idx];
            let seed = base.fork(&job.seed_tag).next_u64_clone();
            let spec = RoomSpec {
                dimensions: dims,
                rt60: job.rt60_ms as f64 / 1000.0,
                source_pos: [0.0; 3],
                mic_pos: [0.0; 3],
                max_order: MaxOrder::Auto,
                sample_rate: 16_000,
                seed,
            }
            .with_random_positions(seed)?;
            let h = room::simulate_rir(&spec)?;
            let wav_path = dir.join(format!("{}.wav", job.id));
            io::write_wav(&wav_path, &Waveform::new(h.taps.clone(), 16_000)?)?;

            let est_rt60 = room::schroeder_rt60(&h).unwrap_or(f64::NAN);
            let meta = format!(
                "room = {}\ndims_m = {}x{}x{}\nrt60_ms = {}\nsplit = {}\nseed = {}\n\
                 source_pos = {:.4},{:.4},{:.4}\nmic_pos = {:.4},{:.4},{:.4}\n\
                 direct_delay_samples = {}\nschroeder_rt60_s = {:.4}\n",
                room_label(job.room_idx),
                dims[0],
                dims[1],
                dims[2],
                job.rt60_ms,
                job.split.label(),
                seed,
                spec.source_pos[0],
                spec.source_pos[1],
                spec.source_pos[2],
                spec.mic_pos[0],
                spec.mic_pos[1],
                spec.mic_pos[2],
                h.first_arrival(),
                est_rt60,
            );
            std::fs::write(dir.join(format!("{}.meta", job.id)), meta)?;
            Ok(StoredRir {
                id: job.id.clone(),
                wav_path,
                room: room_label(job.room_idx),
                rt60_ms: job.rt60_ms,
                split: job.split,
            })
        })
        .collect();

    let mut rirs = Vec::with_capacity(built.len());
    for b in built {
        rirs.push(b?);
    }

    // Time-varying test scenes: cycle the test RIRs of each (room, RT60).
    let mut scenes = Vec::new();
    if cfg.rirs.scene_rirs > 0 {
        for (room_idx, _) in cfg.rirs.rooms.iter().enumerate() {
            for &rt60_ms in &cfg.rirs.rt60s_ms {
                let ids: Vec<String> = rirs
                    .iter()
                    .filter(|r| {
                        r.split == Split::Test
                            && r.room == room_label(room_idx)
                            && r.rt60_ms == rt60_ms
                    })
                    .take(cfg.rirs.scene_rirs)
                    .map(|r| r.id.clone())
                    .collect();
                if ids.len() >= 2 {
                    scenes.push(StoredScene {
                        id: format!("scene_{}_rt{:04}", room_label(room_idx), rt60_ms),
                        rir_ids: ids,
                        switch_period: cfg.rirs.switch_period_secs,
                        room: room_label(room_idx),
                        rt60_ms,
                    });
                }
            }
        }
    }

    let store = RirStore { rirs, scenes };
    save_rir_store(cfg, &store)?;
    write_index(&cfg.work_dir)?;
    Ok(store)
}

fn save_rir_store(cfg: &ProjectConfig, store: &RirStore) -> Result<()> {
    let mut text = String::from("[rirs]\n");
    for r in &store.rirs {
        let _ = writeln!(
            text,
            "{} = {}|{}|{}|{}",
            r.id,
            r.wav_path.display(),
            r.room,
            r.rt60_ms,
            r.split.label()
        );
    }
    text.push_str("\n[scenes]\n");
    for s in &store.scenes {
        let _ = writeln!(
            text,
            "{} = {}|{}|{}|{}",
            s.id,
            s.rir_ids.join(","),
            s.switch_period,
            s.room,
            s.rt60_ms
        );
    }
    std::fs::write(rir_dir(cfg).join("store.conf"), text)?;
    Ok(())
}

pub fn load_rir_store(cfg: &ProjectConfig) -> Result<RirStore> {
    let path = rir_dir(cfg).join("store.conf");
    if !path.exists() {
        return Err(DerevError::Config(format!(
            "no RIR store at {} (run simulate-rirs first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut store = RirStore::default();
    let mut section = "";
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "[rirs]" {
            section = "rirs";
            continue;
        }
        if line == "[scenes]" {
            section = "scenes";
            continue;
        }
        let (id, rest) = line
            .split_once('=')
            .ok_or_else(|| DerevError::Config(format!("bad store line: {line}")))?;
        let fields: Vec<&str> = rest.trim().split('|').collect();
        match section {
            "rirs" => {
                if fields.len() != 4 {
                    return Err(DerevError::Config(format!("bad RIR record: {line}")));
                }
                store.rirs.push(StoredRir {
                    id: id.trim().to_string(),
                    wav_path: PathBuf::from(fields[0]),
                    room: fields[1].to_string(),
                    rt60_ms: fields[2]
                        .parse()
                        .map_err(|_| DerevError::Config("bad rt60".into()))?,
                    split: Split::parse(fields[3])?,
                });
            }
            "scenes" => {
                if fields.len() != 4 {
                    return Err(DerevError::Config(format!("bad scene record: {line}")));
                }
                store.scenes.push(StoredScene {
                    id: id.trim().to_string(),
                    rir_ids: fields[0].split(',').map(|s| s.to_string()).collect(),
                    switch_period: fields[1]
                        .parse()
                        .map_err(|_| DerevError::Config("bad switch period".into()))?,
                    room: fields[2].to_string(),
                    rt60_ms: fields[3]
                        .parse()
                        .map_err(|_| DerevError::Config("bad rt60".into()))?,
                });
            }
            _ => return Err(DerevError::Config("store record outside section".into())),
        }
    }
    Ok(store)
}

/// List the corpus, split it, pair utterances with RIRs and synthesize the
/// reverberant/early pairs. Train and validation pair each utterance with
/// one RIR round-robin; the test split is the full utterance x condition
/// grid (every static test RIR and every scene).
pub fn build_dataset(cfg: &ProjectConfig) -> Result<ExampleStore> {
    cfg.validate()?;
    let rir_store = load_rir_store(cfg)?;
    let _lock = WorkDirLock::acquire(&cfg.work_dir)?;

    if !cfg.corpus_dir.exists() {
        return Err(DerevError::Config(format!(
            "corpus directory {} does not exist; point [paths] corpus_dir at a \
             folder of mono 16 kHz WAV files",
            cfg.corpus_dir.display()
        )));
    }
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(&cfg.corpus_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "wav").unwrap_or(false))
        .collect();
    wavs.sort();
    let need = cfg.corpus.train_utterances
        + cfg.corpus.validation_utterances
        + cfg.corpus.test_utterances;
    if wavs.len() < need {
        return Err(DerevError::Config(format!(
            "corpus {} has {} wav files but the config needs {need} \
             (train {} + validation {} + test {})",
            cfg.corpus_dir.display(),
            wavs.len(),
            cfg.corpus.train_utterances,
            cfg.corpus.validation_utterances,
            cfg.corpus.test_utterances
        )));
    }
    let mut rng = Rng::seed_from(cfg.train.seed).fork("corpus-split");
    rng.shuffle(&mut wavs);

    let train_utts = &wavs[..cfg.corpus.train_utterances];
    let val_utts = &wavs
        [cfg.corpus.train_utterances..cfg.corpus.train_utterances + cfg.corpus.validation_utterances];
    let test_utts = &wavs[cfg.corpus.train_utterances + cfg.corpus.validation_utterances..need];

    let q_e = cfg.train.q_e;
    let mut entries = Vec::new();
    let mut round_robin = |utts: &[PathBuf], split: Split, tag: &str| -> Result<()> {
        let pool = rir_store.split(split);
        if pool.is_empty() {
            return Err(DerevError::Config(format!(
                "no {} RIRs in the store",
                split.label()
            )));
        }
        for (i, wav) in utts.iter().enumerate() {
            let r = pool[i % pool.len()];
            entries.push(ManifestEntry {
                id: format!("{tag}{i:03}_{}", r.id),
                clean_wav: wav.clone(),
                rir_id: r.id.clone(),
                split,
                q_e,
                room: r.room.clone(),
                rt60_ms: r.rt60_ms,
                scenario: Scenario::Static,
            });
        }
        Ok(())
    };
    round_robin(train_utts, Split::Train, "tr")?;
    round_robin(val_utts, Split::Validation, "va")?;

    for (i, wav) in test_utts.iter().enumerate() {
        for r in rir_store.split(Split::Test) {
            entries.push(ManifestEntry {
                id: format!("te{i:03}_{}", r.id),
                clean_wav: wav.clone(),
                rir_id: r.id.clone(),
                split: Split::Test,
                q_e,
                room: r.room.clone(),
                rt60_ms: r.rt60_ms,
                scenario: Scenario::Static,
            });
        }
        for s in &rir_store.scenes {
            entries.push(ManifestEntry {
                id: format!("te{i:03}_{}", s.id),
                clean_wav: wav.clone(),
                rir_id: s.id.clone(),
                split: Split::Test,
                q_e,
                room: s.room.clone(),
                rt60_ms: s.rt60_ms,
                scenario: Scenario::TimeVarying,
            });
        }
    }

    let manifest = DatasetManifest {
        entries,
        seed: cfg.train.seed,
        stft: cfg.stft,
    };

    // Resolve RIR sources (scenes load their member RIRs).
    let mut sources: BTreeMap<String, RirSource> = BTreeMap::new();
    for e in &manifest.entries {
        if sources.contains_key(&e.rir_id) {
            continue;
        }
        let src = match rir_store.scenes.iter().find(|s| s.id == e.rir_id) {
            Some(scene) => {
                let rirs = scene
                    .rir_ids
                    .iter()
                    .map(|id| rir_store.load_filter(id, 16_000))
                    .collect::<Result<Vec<_>>>()?;
                RirSource::Scene(SceneScript::new(rirs, scene.switch_period)?)
            }
            None => RirSource::Static(rir_store.load_filter(&e.rir_id, 16_000)?),
        };
        sources.insert(e.rir_id.clone(), src);
    }

    let out = dataset_dir(cfg);
    save_manifest(&out.join("manifest.conf"), &manifest)?;
    let store = train::build_dataset(&manifest, &sources, &out)?;
    save_example_store(&out.join("index.conf"), &store)?;
    write_index(&cfg.work_dir)?;
    Ok(store)
}

fn save_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    let mut text = format!(
        "[dataset]\nseed = {}\nwindow_len = {}\nhop = {}\nfft_len = {}\n\n[entries]\n",
        m.seed, m.stft.window_len, m.stft.hop, m.stft.fft_len
    );
    for e in &m.entries {
        let _ = writeln!(
            text,
            "{} = {}|{}|{}|{}|{}|{}|{}",
            e.id,
            e.clean_wav.display(),
            e.rir_id,
            e.split.label(),
            e.q_e,
            e.room,
            e.rt60_ms,
            e.scenario.label()
        );
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn save_example_store(path: &Path, store: &ExampleStore) -> Result<()> {
    let mut text = format!(
        "[stft]\nwindow_len = {}\nhop = {}\nfft_len = {}\n\n[examples]\n",
        store.stft.window_len, store.stft.hop, store.stft.fft_len
    );
    for e in &store.examples {
        let _ = writeln!(
            text,
            "{} = {}|{}|{}|{}|{}|{}",
            e.id,
            e.split.label(),
            e.y_path.display(),
            e.ye_path.display(),
            e.room,
            e.rt60_ms,
            e.scenario.label()
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_example_store(cfg: &ProjectConfig) -> Result<ExampleStore> {
    let path = dataset_dir(cfg).join("index.conf");
    if !path.exists() {
        return Err(DerevError::Config(format!(
            "no dataset at {} (run build-dataset first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut store = ExampleStore {
        examples: Vec::new(),
        stft: cfg.stft,
    };
    let mut in_examples = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            in_examples = line == "[examples]";
            continue;
        }
        if !in_examples {
            continue;
        }
        let (id, rest) = line
            .split_once('=')
            .ok_or_else(|| DerevError::Config(format!("bad index line: {line}")))?;
        let f: Vec<&str> = rest.trim().split('|').collect();
        if f.len() != 6 {
            return Err(DerevError::Config(format!("bad example record: {line}")));
        }
        store.examples.push(BuiltExample {
            id: id.trim().to_string(),
            split: Split::parse(f[0])?,
            y_path: PathBuf::from(f[1]),
            ye_path: PathBuf::from(f[2]),
            room: f[3].to_string(),
            rt60_ms: f[4]
                .parse()
                .map_err(|_| DerevError::Config("bad rt60".into()))?,
            scenario: if f[5] == "time-varying" {
                Scenario::TimeVarying
            } else {
                Scenario::Static
            },
        });
    }
    Ok(store)
}

/// Train one head on the built dataset; progress goes to stdout, one line
/// per epoch (via the CSV written by the trainer).
pub fn train_head(cfg: &ProjectConfig, head: Head, resume: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let store = load_example_store(cfg)?;
    let _lock = WorkDirLock::acquire(&cfg.work_dir)?;
    let out_dir = checkpoints_dir(cfg);
    let resume_ckpt = if resume {
        let path = out_dir.join(format!("{}_last.ckpt", head.tag()));
        Some(load_checkpoint(&path)?)
    } else {
        None
    };
    let outcome = train::train(
        &cfg.train.to_train_config(),
        &store,
        head,
        &out_dir,
        resume_ckpt,
    )?;
    write_index(&cfg.work_dir)?;
    Ok(outcome)
}

/// How a waveform gets enhanced.
pub enum EnhanceMethod {
    /// Pass-through: the identity inverse filter (the "Rev." column).
    Identity,
    /// A trained model loaded from a checkpoint.
    Model(Box<Checkpoint>),
}

impl EnhanceMethod {
    pub fn from_checkpoint_path(path: &Path) -> Result<Self> {
        Ok(EnhanceMethod::Model(Box::new(load_checkpoint(path)?)))
    }
}

/// Full enhancement pipeline for one utterance: STFT, features, network,
/// filtering/masking, phase borrowing, overlap-add, truncation to the input
/// length.
pub fn enhance_waveform(method: &EnhanceMethod, y: &Waveform, stft_cfg: &StftConfig) -> Result<Waveform> {
    let spec_y = dsp::stft(y, stft_cfg)?;
    let bins = spec_y.bins();
    let frames = spec_y.frames();
    let net_bins = bins - 1;
    let reverb_mag = spec_y.magnitudes();

    let mag_est: Vec<f64> = match method {
        EnhanceMethod::Identity => {
            let stack = enhance::shifted_magnitude_stack(&reverb_mag, bins, frames, 1);
            let w = InverseFilter::identity(1, bins, frames);
            enhance::apply_inverse_filter(&stack, &w)?.0
        }
        EnhanceMethod::Model(ckpt) => {
            let mut net = UNet::new(ckpt.spec()?, 0);
            net.params = ckpt.params.clone();
            net.set_mode(Mode::Eval);

            let v = dsp::lps(&spec_y);
            let mut input = Grid3::zeros(1, net_bins, frames);
            for k in 0..net_bins {
                input
                    .row_mut(0, k)
                    .copy_from_slice(&v.values[k * frames..(k + 1) * frames]);
            }
            let out = net.forward_single(&input)?;

            match ckpt.head {
                Head::IFilt => {
                    let taps = ckpt.filter_taps;
                    let stack =
                        enhance::shifted_magnitude_stack(&reverb_mag, bins, frames, taps);
                    let mut w = Grid3::zeros(taps, bins, frames);
                    for p in 0..taps {
                        for k in 0..net_bins {
                            w.row_mut(p, k).copy_from_slice(out.row(p, k));
                        }
                    }
                    w.row_mut(0, net_bins).fill(1.0);
                    enhance::apply_inverse_filter(&stack, &InverseFilter::new(w)?)?.0
                }
                Head::Dsm => {
                    let mut lps_est = vec![0.0; bins * frames];
                    for k in 0..net_bins {
                        lps_est[k * frames..(k + 1) * frames].copy_from_slice(out.row(0, k));
                    }
                    // Nyquist bypasses the network: keep the input LPS.
                    lps_est[net_bins * frames..]
                        .copy_from_slice(&v.values[net_bins * frames..]);
                    enhance::dsm_head_decode(&lps_est)
                }
                Head::Dirm => {
                    let mut mag = vec![0.0; bins * frames];
                    for k in 0..net_bins {
                        let m = out.row(0, k);
                        let src = &reverb_mag[k * frames..(k + 1) * frames];
                        let dst = &mut mag[k * frames..(k + 1) * frames];
                        for l in 0..frames {
                            dst[l] = m[l] * src[l];
                        }
                    }
                    mag[net_bins * frames..].copy_from_slice(&reverb_mag[net_bins * frames..]);
                    mag
                }
            }
        }
    };

    let mut wav = enhance::reconstruct(&mag_est, &spec_y)?;
    wav.samples.truncate(y.len());
    wav.sample_rate = y.sample_rate;
    Ok(wav)
}

/// Dereverberate a single WAV file.
pub fn dereverb_file(method: &EnhanceMethod, input: &Path, output: &Path, stft_cfg: &StftConfig) -> Result<()> {
    let y = io::read_wav(input)?;
    let enhanced = enhance_waveform(method, &y, stft_cfg)?;
    io::write_wav(output, &enhanced)
}

/// Score every configured method over the test split, static and
/// time-varying, and emit the per-utterance JSONL plus the aggregate table
/// and CSV.
pub fn evaluate(cfg: &ProjectConfig) -> Result<metrics::MetricReport> {
    cfg.validate()?;
    let store = load_example_store(cfg)?;
    let _lock = WorkDirLock::acquire(&cfg.work_dir)?;
    let test = store.split(Split::Test);
    if test.is_empty() {
        return Err(DerevError::Config("dataset has no test examples".into()));
    }

    // Load checkpoints once.
    let mut methods: Vec<(String, EnhanceMethod)> = Vec::new();
    for m in &cfg.methods {
        let method = match m.as_str() {
            "rev" => EnhanceMethod::Identity,
            tag => {
                let path = checkpoints_dir(cfg).join(format!("{tag}_best.ckpt"));
                if !path.exists() {
                    return Err(DerevError::Config(format!(
                        "no checkpoint for method '{tag}' at {} (train it first)",
                        path.display()
                    )));
                }
                EnhanceMethod::from_checkpoint_path(&path)?
            }
        };
        methods.push((m.clone(), method));
    }

    let jobs: Vec<(usize, usize)> = (0..test.len())
        .flat_map(|e| (0..methods.len()).map(move |m| (e, m)))
        .collect();
    let scored: Vec<Result<UtteranceScore>> = jobs
        .par_iter()
        .map(|&(ei, mi)| {
            let e = test[ei];
            let (name, method) = &methods[mi];
            let y = io::read_wav(&e.y_path)?;
            let ye = io::read_wav(&e.ye_path)?;
            let enhanced = enhance_waveform(method, &y, &store.stft)?;
            let si = metrics::si_sdr(&enhanced, &ye)?;
            let st = metrics::estoi(&enhanced, &ye)?;
            Ok(UtteranceScore {
                utterance: e.id.clone(),
                method: name.clone(),
                room: e.room.clone(),
                rt60_ms: e.rt60_ms,
                scenario: e.scenario,
                si_sdr_db: si,
                estoi: st,
            })
        })
        .collect();

    let mut scores = Vec::with_capacity(scored.len());
    for s in scored {
        scores.push(s?);
    }
    let report = metrics::aggregate(&scores)?;

    let dir = eval_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("per_utterance.jsonl"), metric_report::render_jsonl(&report))?;
    std::fs::write(dir.join("tables.txt"), metric_report::render_table(&report))?;
    std::fs::write(dir.join("tables.csv"), metric_report::render_csv(&report))?;
    write_index(&cfg.work_dir)?;
    Ok(report)
}

/// Rebuild the tables from the stored per-utterance scores.
pub fn report(cfg: &ProjectConfig) -> Result<String> {
    let path = eval_dir(cfg).join("per_utterance.jsonl");
    if !path.exists() {
        return Err(DerevError::Config(format!(
            "no evaluation results at {} (run evaluate first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut scores = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        scores.push(parse_score_line(line)?);
    }
    let report = metrics::aggregate(&scores)?;
    let table = metric_report::render_table(&report);
    std::fs::write(eval_dir(cfg).join("tables.txt"), &table)?;
    std::fs::write(eval_dir(cfg).join("tables.csv"), metric_report::render_csv(&report))?;
    Ok(table)
}

fn json_field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("\"{key}\":");
    let start = line
        .find(&pat)
        .ok_or_else(|| DerevError::Config(format!("missing field {key} in: {line}")))?
        + pat.len();
    let rest = &line[start..];
    if let Some(stripped) = rest.strip_prefix('"') {
        let end = stripped
            .find('"')
            .ok_or_else(|| DerevError::Config("unterminated string".into()))?;
        Ok(&stripped[..end])
    } else {
        let end = rest
            .find([',', '}'])
            .ok_or_else(|| DerevError::Config("unterminated number".into()))?;
        Ok(rest[..end].trim())
    }
}

fn parse_score_line(line: &str) -> Result<UtteranceScore> {
    Ok(UtteranceScore {
        utterance: json_field(line, "utterance")?.to_string(),
        method: json_field(line, "method")?.to_string(),
        room: json_field(line, "room")?.to_string(),
        rt60_ms: json_field(line, "rt60_ms")?
            .parse()
            .map_err(|_| DerevError::Config("bad rt60_ms".into()))?,
        scenario: if json_field(line, "scenario")? == "time-varying" {
            Scenario::TimeVarying
        } else {
            Scenario::Static
        },
        si_sdr_db: json_field(line, "si_sdr_db")?
            .parse()
            .map_err(|_| DerevError::Config("bad si_sdr_db".into()))?,
        estoi: json_field(line, "estoi")?
            .parse()
            .map_err(|_| DerevError::Config("bad estoi".into()))?,
    })
}

/// Refresh the artifact index: one `path = fnv64` line per file under the
/// work directory, sorted, excluding the index and lock themselves.
pub fn write_index(work_dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(work_dir, &mut files)?;
    files.sort();
    let mut text = String::from("# artifact digests (fnv64)\n");
    for f in files {
        let name = f
            .strip_prefix(work_dir)
            .unwrap_or(&f)
            .to_string_lossy()
            .to_string();
        if name == "index.conf" || name == ".lock" {
            continue;
        }
        let _ = writeln!(text, "{name} = {:016x}", train::file_digest(&f)?);
    }
    std::fs::write(work_dir.join("index.conf"), text)?;
    Ok(())
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

trait ForkSeed {
    fn next_u64_clone(&self) -> u64;
}

impl ForkSeed for Rng {
    fn next_u64_clone(&self) -> u64 {
        self.clone().next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "derev-pipeline-{}-{name}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn tiny_config(root: &Path) -> ProjectConfig {
        let mut cfg = ProjectConfig::desk();
        cfg.corpus_dir = root.join("corpus");
        cfg.work_dir = root.join("work");
        cfg.corpus.train_utterances = 3;
        cfg.corpus.validation_utterances = 1;
        cfg.corpus.test_utterances = 1;
        cfg.rirs.rooms = vec![[5.0, 4.0, 3.0]];
        cfg.rirs.rt60s_ms = vec![300];
        cfg.rirs.train_rooms = 1;
        cfg.rirs.train_positions = 2;
        cfg.rirs.validation_positions = 1;
        cfg.rirs.test_positions = 2;
        cfg.rirs.scene_rirs = 2;
        cfg.train.epochs = 2;
        cfg.train.batch_size = 2;
        cfg
    }

    fn write_corpus(cfg: &ProjectConfig, n: usize, secs: f64) {
        std::fs::create_dir_all(&cfg.corpus_dir).unwrap();
        for i in 0..n {
            io::write_wav(
                &cfg.corpus_dir.join(format!("utt{i:02}.wav")),
                &synth::speech_like(9000 + i as u64, secs, 16_000),
            )
            .unwrap();
        }
    }

    #[test]
    fn lock_excludes_second_holder() {
        let root = scratch("lock");
        let a = WorkDirLock::acquire(&root).unwrap();
        assert!(matches!(
            WorkDirLock::acquire(&root),
            Err(DerevError::WorkDirLocked(_))
        ));
        drop(a);
        let _b = WorkDirLock::acquire(&root).unwrap();
    }

    #[test]
    fn simulate_rirs_grid_counts_and_determinism() {
        let root = scratch("simrirs");
        let cfg = tiny_config(&root);
        let store = simulate_rirs(&cfg).unwrap();
        // 1 room x 1 rt60 x (2 train + 1 val + 2 test) = 5
        assert_eq!(store.rirs.len(), 5);
        assert_eq!(store.split(Split::Train).len(), 2);
        assert_eq!(store.split(Split::Test).len(), 2);
        assert_eq!(store.scenes.len(), 1);

        let digests: Vec<u64> = store
            .rirs
            .iter()
            .map(|r| train::file_digest(&r.wav_path).unwrap())
            .collect();
        // same seed, same files
        let again = simulate_rirs(&cfg).unwrap();
        let digests2: Vec<u64> = again
            .rirs
            .iter()
            .map(|r| train::file_digest(&r.wav_path).unwrap())
            .collect();
        assert_eq!(digests, digests2);

        // reload from disk matches
        let loaded = load_rir_store(&cfg).unwrap();
        assert_eq!(loaded.rirs.len(), 5);
        assert_eq!(loaded.scenes.len(), 1);
    }

    #[test]
    fn paper_scale_rir_counts() {
        // Room 1, 3 RT60s, 15 positions: the training grid is 45 RIRs.
        let cfg = ProjectConfig::paper();
        let per_room_trains: usize = cfg.rirs.rt60s_ms.len() * cfg.rirs.train_positions;
        assert_eq!(per_room_trains * cfg.rirs.train_rooms, 45);
    }

    #[test]
    fn missing_corpus_is_actionable() {
        let root = scratch("nocorpus");
        let cfg = tiny_config(&root);
        simulate_rirs(&cfg).unwrap();
        match build_dataset(&cfg) {
            Err(DerevError::Config(msg)) => {
                assert!(msg.contains("corpus"), "{msg}");
                assert!(msg.contains(cfg.corpus_dir.to_string_lossy().as_ref()), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn dataset_and_identity_dereverb_round_trip() {
        let root = scratch("dataset");
        let cfg = tiny_config(&root);
        write_corpus(&cfg, 5, 0.6);
        simulate_rirs(&cfg).unwrap();
        let store = build_dataset(&cfg).unwrap();
        // 3 train + 1 val + 1 test utt x (2 static rirs + 1 scene) = 4+3
        assert_eq!(store.split(Split::Train).len(), 3);
        assert_eq!(store.split(Split::Validation).len(), 1);
        assert_eq!(store.split(Split::Test).len(), 3);
        assert!(store
            .split(Split::Test)
            .iter()
            .any(|e| e.scenario == Scenario::TimeVarying));

        // reload equals
        let loaded = load_example_store(&cfg).unwrap();
        assert_eq!(loaded.examples.len(), store.examples.len());

        // identity dereverb reproduces the input interior
        let e = &store.split(Split::Test)[0];
        let y = io::read_wav(&e.y_path).unwrap();
        let out = enhance_waveform(&EnhanceMethod::Identity, &y, &cfg.stft).unwrap();
        assert_eq!(out.len(), y.len());
        let lo = cfg.stft.window_len;
        let hi = y.len() - cfg.stft.window_len;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in lo..hi {
            num += (out.samples[i] - y.samples[i]).powi(2);
            den += y.samples[i].powi(2);
        }
        assert!((num / den).sqrt() <= 1e-6);

        // index written with digests
        let index = std::fs::read_to_string(cfg.work_dir.join("index.conf")).unwrap();
        assert!(index.lines().count() > 5);
    }
}
