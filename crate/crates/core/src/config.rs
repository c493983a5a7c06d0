//! Project configuration: a small human-readable key/value format with
//! `[section]` headers, `key = value` lines and `#` comments.
//!
//! Schema (see `config/desk.conf` for a commented example):
//!
//! ```text
//! [paths]   corpus_dir, work_dir
//! [stft]    window_len, hop, fft_len
//! [train]   epochs, batch_size, context, filter_taps, q_e, initial_lr,
//!           seed, checkpoint_every
//! [corpus]  train_utterances, validation_utterances, test_utterances
//! [rirs]    rooms (comma list of LxWxH in meters), rt60s_ms (comma list),
//!           train_rooms (first N rooms used for train/val),
//!           train_positions, validation_positions, test_positions,
//!           scene_rirs (0 disables time-varying scenes),
//!           switch_period_secs
//! [eval]    methods (comma list of rev, dsm, dirm, ifilt)
//! ```
//!
//! Every value can be overridden by an environment variable named
//! `DEREV_<SECTION>_<KEY>` (upper case), e.g. `DEREV_TRAIN_EPOCHS=3`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dsp::StftConfig;
use crate::error::{DerevError, Result};
use crate::train::TrainConfig;

pub const ENV_PREFIX: &str = "DEREV_";

#[derive(Clone, Debug, PartialEq)]
pub struct RirGridConfig {
    /// Room dimensions in meters.
    pub rooms: Vec<[f64; 3]>,
    pub rt60s_ms: Vec<u32>,
    /// The first `train_rooms` rooms provide train/validation RIRs; every
    /// room provides test RIRs (unseen-room evaluation).
    pub train_rooms: usize,
    pub train_positions: usize,
    pub validation_positions: usize,
    pub test_positions: usize,
    /// RIRs cycled per time-varying test scene; 0 disables scenes.
    pub scene_rirs: usize,
    pub switch_period_secs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    pub train_utterances: usize,
    pub validation_utterances: usize,
    pub test_utterances: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectConfig {
    pub corpus_dir: PathBuf,
    pub work_dir: PathBuf,
    pub stft: StftConfig,
    pub train: TrainConfigValues,
    pub corpus: CorpusConfig,
    pub rirs: RirGridConfig,
    pub methods: Vec<String>,
}

/// TrainConfig minus the seed duplication quirks, as stored in the file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfigValues {
    pub epochs: usize,
    pub batch_size: usize,
    pub context: usize,
    pub filter_taps: usize,
    pub q_e: usize,
    pub initial_lr: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl TrainConfigValues {
    pub fn to_train_config(self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            context: self.context,
            filter_taps: self.filter_taps,
            q_e: self.q_e,
            initial_lr: self.initial_lr,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        }
    }
}

impl ProjectConfig {
    /// Desk-scale defaults: tiny corpus, two RT60s, short training. Runs
    /// end to end in minutes on a laptop.
    pub fn desk() -> Self {
        ProjectConfig {
            corpus_dir: PathBuf::from("corpus"),
            work_dir: PathBuf::from("work"),
            stft: StftConfig::default(),
            train: TrainConfigValues {
                epochs: 25,
                batch_size: 4,
                context: 5,
                filter_taps: 9,
                q_e: 32,
                initial_lr: 0.002,
                seed: 1,
                checkpoint_every: 5,
            },
            corpus: CorpusConfig {
                train_utterances: 24,
                validation_utterances: 4,
                test_utterances: 8,
            },
            rirs: RirGridConfig {
                rooms: vec![[8.0, 6.0, 4.0], [6.0, 4.0, 3.5]],
                rt60s_ms: vec![500, 1000],
                train_rooms: 1,
                train_positions: 3,
                validation_positions: 1,
                test_positions: 2,
                scene_rirs: 2,
                switch_period_secs: 1.0,
            },
            methods: vec![
                "rev".into(),
                "dsm".into(),
                "dirm".into(),
                "ifilt".into(),
            ],
        }
    }

    /// Full-scale protocol: Room 1 training at three RT60s with 15 source/
    /// mic placements, 200 epochs, batch 32. Needs a real corpus and hours
    /// of compute.
    pub fn paper() -> Self {
        ProjectConfig {
            corpus_dir: PathBuf::from("corpus"),
            work_dir: PathBuf::from("work"),
            stft: StftConfig::default(),
            train: TrainConfigValues {
                epochs: 200,
                batch_size: 32,
                context: 5,
                filter_taps: 9,
                q_e: 32,
                initial_lr: 0.001,
                seed: 1,
                checkpoint_every: 10,
            },
            corpus: CorpusConfig {
                train_utterances: 4620,
                validation_utterances: 400,
                test_utterances: 192,
            },
            rirs: RirGridConfig {
                rooms: vec![[8.0, 6.0, 4.0], [6.0, 4.0, 3.5]],
                rt60s_ms: vec![500, 750, 1000],
                train_rooms: 1,
                train_positions: 15,
                validation_positions: 10,
                test_positions: 10,
                scene_rirs: 5,
                switch_period_secs: 1.0,
            },
            methods: vec![
                "rev".into(),
                "dsm".into(),
                "dirm".into(),
                "ifilt".into(),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.train.to_train_config().validate()?;
        if self.rirs.rooms.is_empty() || self.rirs.rt60s_ms.is_empty() {
            return Err(DerevError::Config("need at least one room and RT60".into()));
        }
        if self.rirs.train_rooms == 0 || self.rirs.train_rooms > self.rirs.rooms.len() {
            return Err(DerevError::Config(format!(
                "train_rooms {} out of range 1..={}",
                self.rirs.train_rooms,
                self.rirs.rooms.len()
            )));
        }
        for m in &self.methods {
            if !["rev", "dsm", "dirm", "ifilt"].contains(&m.as_str()) {
                return Err(DerevError::Config(format!("unknown method '{m}'")));
            }
        }
        Ok(())
    }

    /// Canonical serialization; `parse` of the output reproduces the value.
    pub fn to_config_string(&self) -> String {
        let rooms = self
            .rirs
            .rooms
            .iter()
            .map(|d| format!("{}x{}x{}", d[0], d[1], d[2]))
            .collect::<Vec<_>>()
            .join(", ");
        let rt60s = self
            .rirs
            .rt60s_ms
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        format!(
            "[paths]\n\
             corpus_dir = {}\n\
             work_dir = {}\n\
             \n[stft]\n\
             window_len = {}\nhop = {}\nfft_len = {}\n\
             \n[train]\n\
             epochs = {}\nbatch_size = {}\ncontext = {}\nfilter_taps = {}\n\
             q_e = {}\ninitial_lr = {}\nseed = {}\ncheckpoint_every = {}\n\
             \n[corpus]\n\
             train_utterances = {}\nvalidation_utterances = {}\ntest_utterances = {}\n\
             \n[rirs]\n\
             rooms = {}\nrt60s_ms = {}\ntrain_rooms = {}\ntrain_positions = {}\n\
             validation_positions = {}\ntest_positions = {}\nscene_rirs = {}\n\
             switch_period_secs = {}\n\
             \n[eval]\n\
             methods = {}\n",
            self.corpus_dir.display(),
            self.work_dir.display(),
            self.stft.window_len,
            self.stft.hop,
            self.stft.fft_len,
            self.train.epochs,
            self.train.batch_size,
            self.train.context,
            self.train.filter_taps,
            self.train.q_e,
            self.train.initial_lr,
            self.train.seed,
            self.train.checkpoint_every,
            self.corpus.train_utterances,
            self.corpus.validation_utterances,
            self.corpus.test_utterances,
            rooms,
            rt60s,
            self.rirs.train_rooms,
            self.rirs.train_positions,
            self.rirs.validation_positions,
            self.rirs.test_positions,
            self.rirs.scene_rirs,
            self.rirs.switch_period_secs,
            self.methods.join(", "),
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_sections(text)?;
        Self::from_sections(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(DerevError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Apply `DEREV_<SECTION>_<KEY>` environment overrides.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        let mut kv = Sections::new();
        for (key, value) in std::env::vars() {
            if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
                if let Some((section, name)) = rest.split_once('_') {
                    kv.entry(section.to_ascii_lowercase())
                        .or_default()
                        .insert(name.to_ascii_lowercase(), value);
                }
            }
        }
        if kv.is_empty() {
            return Ok(());
        }
        let mut base = parse_sections(&self.to_config_string())?;
        for (section, pairs) in kv {
            for (k, v) in pairs {
                base.entry(section.clone()).or_default().insert(k, v);
            }
        }
        *self = Self::from_sections(base)?;
        Ok(())
    }

    fn from_sections(kv: Sections) -> Result<Self> {
        let get = |section: &str, key: &str| -> Result<&String> {
            kv.get(section)
                .and_then(|s| s.get(key))
                .ok_or_else(|| DerevError::Config(format!("missing [{section}] {key}")))
        };
        let usize_of = |section: &str, key: &str| -> Result<usize> {
            get(section, key)?
                .parse()
                .map_err(|_| DerevError::Config(format!("[{section}] {key} must be an integer")))
        };
        let f64_of = |section: &str, key: &str| -> Result<f64> {
            get(section, key)?
                .parse()
                .map_err(|_| DerevError::Config(format!("[{section}] {key} must be a number")))
        };

        let rooms = get("rirs", "rooms")?
            .split(',')
            .map(|r| parse_room_dims(r.trim()))
            .collect::<Result<Vec<_>>>()?;
        let rt60s_ms = get("rirs", "rt60s_ms")?
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|_| DerevError::Config("rt60s_ms must be integers".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let methods = get("eval", "methods")?
            .split(',')
            .map(|m| m.trim().to_string())
            .filter(|m| !m.is_empty())
            .collect();

        let cfg = ProjectConfig {
            corpus_dir: PathBuf::from(get("paths", "corpus_dir")?),
            work_dir: PathBuf::from(get("paths", "work_dir")?),
            stft: StftConfig {
                window_len: usize_of("stft", "window_len")?,
                hop: usize_of("stft", "hop")?,
                fft_len: usize_of("stft", "fft_len")?,
                window_kind: crate::dsp::WindowKind::Hamming,
            },
            train: TrainConfigValues {
                epochs: usize_of("train", "epochs")?,
                batch_size: usize_of("train", "batch_size")?,
                context: usize_of("train", "context")?,
                filter_taps: usize_of("train", "filter_taps")?,
                q_e: usize_of("train", "q_e")?,
                initial_lr: f64_of("train", "initial_lr")?,
                seed: get("train", "seed")?
                    .parse()
                    .map_err(|_| DerevError::Config("seed must be an integer".into()))?,
                checkpoint_every: usize_of("train", "checkpoint_every")?,
            },
            corpus: CorpusConfig {
                train_utterances: usize_of("corpus", "train_utterances")?,
                validation_utterances: usize_of("corpus", "validation_utterances")?,
                test_utterances: usize_of("corpus", "test_utterances")?,
            },
            rirs: RirGridConfig {
                rooms,
                rt60s_ms,
                train_rooms: usize_of("rirs", "train_rooms")?,
                train_positions: usize_of("rirs", "train_positions")?,
                validation_positions: usize_of("rirs", "validation_positions")?,
                test_positions: usize_of("rirs", "test_positions")?,
                scene_rirs: usize_of("rirs", "scene_rirs")?,
                switch_period_secs: f64_of("rirs", "switch_period_secs")?,
            },
            methods,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out = Sections::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            out.entry(section.clone()).or_default();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            DerevError::Config(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        if section.is_empty() {
            return Err(DerevError::Config(format!(
                "line {}: key outside any [section]",
                lineno + 1
            )));
        }
        out.get_mut(&section)
            .unwrap()
            .insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_room_dims(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 3 {
        return Err(DerevError::Config(format!(
            "room '{s}' must be LxWxH in meters"
        )));
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse()
            .map_err(|_| DerevError::Config(format!("bad room dimension '{p}'")))?;
        if out[i] <= 0.0 {
            return Err(DerevError::Config("room dimensions must be positive".into()));
        }
    }
    Ok(out)
}
