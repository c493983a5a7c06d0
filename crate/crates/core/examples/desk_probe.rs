// scratch: end-to-end desk-scale probe for the directional quality claim
use derev_core::{config::ProjectConfig, io, net::Head, pipeline, synth, train::Split};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ifilt_epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(25);
    let base_epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.002);
    let train_utts: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(24);
    let secs: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3.2);

    let root = std::env::temp_dir().join("derev-desk-probe");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();

    let mut cfg = ProjectConfig::desk();
    cfg.corpus_dir = root.join("corpus");
    cfg.work_dir = root.join("work");
    cfg.corpus.train_utterances = train_utts;
    cfg.corpus.validation_utterances = 4;
    cfg.corpus.test_utterances = 8;
    cfg.train.epochs = ifilt_epochs;
    cfg.train.batch_size = 4;
    cfg.train.initial_lr = lr;

    std::fs::create_dir_all(&cfg.corpus_dir).unwrap();
    let total = train_utts + 4 + 8;
    for i in 0..total {
        io::write_wav(
            &cfg.corpus_dir.join(format!("utt{i:03}.wav")),
            &synth::speech_like(40_000 + i as u64, secs, 16_000),
        )
        .unwrap();
    }

    let t0 = std::time::Instant::now();
    let rirs = pipeline::simulate_rirs(&cfg).unwrap();
    println!("rirs: {} + {} scenes ({:.1?})", rirs.rirs.len(), rirs.scenes.len(), t0.elapsed());

    let t = std::time::Instant::now();
    let store = pipeline::build_dataset(&cfg).unwrap();
    println!("dataset: {} examples, test {} ({:.1?})", store.examples.len(), store.split(Split::Test).len(), t.elapsed());

    println!("identity baseline loss: train {:.4e} val {:.4e}",
        derev_core::train::identity_baseline_loss(&store, Split::Train).unwrap(),
        derev_core::train::identity_baseline_loss(&store, Split::Validation).unwrap());

    let t = std::time::Instant::now();
    let out = pipeline::train_head(&cfg, Head::IFilt, false).unwrap();
    println!("ifilt: {:.4e} -> {:.4e}, best val {:.4e} @ {} ({:.1?})",
        out.initial_train_loss, out.final_train_loss, out.best_val_loss, out.best_epoch, t.elapsed());

    let mut bcfg = cfg.clone();
    bcfg.train.epochs = base_epochs;
    for head in [Head::Dsm, Head::Dirm] {
        let t = std::time::Instant::now();
        let o = pipeline::train_head(&bcfg, head, false).unwrap();
        println!("{}: {:.4e} -> {:.4e} ({:.1?})", head.tag(), o.initial_train_loss, o.final_train_loss, t.elapsed());
    }

    let t = std::time::Instant::now();
    let report = pipeline::evaluate(&cfg).unwrap();
    println!("evaluate ({:.1?})", t.elapsed());
    print!("{}", derev_core::metrics::report::render_table(&report));

    // directional check: mean over all test utterances
    for method in ["rev", "ifilt", "dsm", "dirm"] {
        let (mut sdr, mut st, mut n) = (0.0, 0.0, 0);
        for s in report.per_utterance.iter().filter(|s| s.method == method) {
            sdr += s.si_sdr_db;
            st += s.estoi;
            n += 1;
        }
        println!("MEAN {method}: si_sdr {:.3} dB, estoi {:.4} (n={n})", sdr / n as f64, st / n as f64);
    }
    println!("total {:.1?}", t0.elapsed());
}
