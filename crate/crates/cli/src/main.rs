//! Command-line entry points for the derev toolkit: RIR simulation, dataset
//! synthesis, training, single-file enhancement, evaluation and reporting.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use derev_core::config::ProjectConfig;
use derev_core::metrics::report::render_table;
use derev_core::net::Head;
use derev_core::pipeline::{self, EnhanceMethod};
use derev_core::DerevError;

#[derive(Parser)]
#[command(
    name = "derev",
    about = "Speech dereverberation by spectral-domain inverse filtering of the \
             convolutive transfer function model, with a trainable online U-net.",
    version
)]
struct Cli {
    /// Project configuration file; defaults to the selected profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration profile used when no --config is given.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,

    /// Override the project seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Tiny corpus, two RT60s, short training; minutes on a laptop.
    Desk,
    /// The full protocol: 200 epochs, batch 32, the complete RIR grid.
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Ifilt,
    Dsm,
    Dirm,
}

impl HeadArg {
    fn to_head(self) -> Head {
        match self {
            HeadArg::Ifilt => Head::IFilt,
            HeadArg::Dsm => Head::Dsm,
            HeadArg::Dirm => Head::Dirm,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured grid of room impulse responses.
    SimulateRirs,
    /// Split the corpus and synthesize reverberant/early training pairs.
    BuildDataset,
    /// Train one model head on the built dataset.
    Train {
        #[arg(long, value_enum)]
        head: HeadArg,
        /// Continue from the head's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Dereverberate a single WAV file with a trained checkpoint.
    Dereverb {
        /// Checkpoint to load; omit with --identity for a pass-through run.
        #[arg(long, required_unless_present = "identity")]
        checkpoint: Option<PathBuf>,
        /// Use the identity inverse filter instead of a model.
        #[arg(long)]
        identity: bool,
        input: PathBuf,
        output: PathBuf,
    },
    /// Score every configured method on the test split and write tables.
    Evaluate,
    /// Regenerate the tables from stored per-utterance scores.
    Report,
}

fn load_config(cli: &Cli) -> Result<ProjectConfig, DerevError> {
    let mut cfg = match &cli.config {
        Some(path) => ProjectConfig::load(path)?,
        None => match cli.profile {
            Profile::Desk => ProjectConfig::desk(),
            Profile::Paper => ProjectConfig::paper(),
        },
    };
    cfg.apply_env_overrides()?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), DerevError> {
    match &cli.command {
        Command::SimulateRirs => {
            let cfg = load_config(&cli)?;
            let store = pipeline::simulate_rirs(&cfg)?;
            println!(
                "simulated {} RIRs and {} scenes into {}",
                store.rirs.len(),
                store.scenes.len(),
                cfg.work_dir.join("rirs").display()
            );
        }
        Command::BuildDataset => {
            let cfg = load_config(&cli)?;
            let store = pipeline::build_dataset(&cfg)?;
            println!(
                "built {} examples into {}",
                store.examples.len(),
                cfg.work_dir.join("dataset").display()
            );
        }
        Command::Train { head, resume } => {
            let cfg = load_config(&cli)?;
            let head = head.to_head();
            let outcome = pipeline::train_head(&cfg, head, *resume)?;
            // One progress line per epoch, straight from the training log.
            if let Ok(log) = std::fs::read_to_string(&outcome.log_path) {
                for line in log.lines().skip(1) {
                    if line.contains(",train,") {
                        println!("{line}");
                    }
                }
            }
            println!(
                "trained {}: best validation loss {:.6e} at epoch {} -> {}",
                head.tag(),
                outcome.best_val_loss,
                outcome.best_epoch,
                outcome.best_checkpoint.display()
            );
        }
        Command::Dereverb {
            checkpoint,
            identity,
            input,
            output,
        } => {
            let cfg = load_config(&cli)?;
            let method = if *identity {
                EnhanceMethod::Identity
            } else {
                EnhanceMethod::from_checkpoint_path(checkpoint.as_ref().unwrap())?
            };
            pipeline::dereverb_file(&method, input, output, &cfg.stft)?;
            println!("wrote {}", output.display());
        }
        Command::Evaluate => {
            let cfg = load_config(&cli)?;
            let report = pipeline::evaluate(&cfg)?;
            print!("{}", render_table(&report));
            println!(
                "\nwrote tables and per-utterance scores to {}",
                cfg.work_dir.join("eval").display()
            );
        }
        Command::Report => {
            let cfg = load_config(&cli)?;
            let table = pipeline::report(&cfg)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
