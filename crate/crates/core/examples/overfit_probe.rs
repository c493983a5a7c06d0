// scratch: tune the overfit smoke test
use std::collections::BTreeMap;
use derev_core::{io, synth, train::*, net::Head, room::RirFilter, dsp::StftConfig, metrics::Scenario};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let batch: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(50);
    let secs: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let kind: String = args.get(5).cloned().unwrap_or_else(|| "speech".into());
    let seed: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(11);

    let dir = std::env::temp_dir().join("derev-overfit-probe");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();

    let mut entries = Vec::new();
    for i in 0..4u64 {
        let wav = dir.join(format!("u{i}.wav"));
        let sig = match kind.as_str() {
            "noise" => synth::white_noise(300 + i, (secs * 16_000.0) as usize, 0.1, 16_000),
            _ => synth::speech_like(300 + i, secs, 16_000),
        };
        io::write_wav(&wav, &sig).unwrap();
        entries.push(ManifestEntry {
            id: format!("u{i}"),
            clean_wav: wav,
            rir_id: "imp".into(),
            split: Split::Train,
            q_e: 1,
            room: "none".into(),
            rt60_ms: 0,
            scenario: Scenario::Static,
        });
    }
    let manifest = DatasetManifest { entries, seed: 7, stft: StftConfig::default() };
    let mut rirs = BTreeMap::new();
    rirs.insert("imp".to_string(), RirSource::Static(RirFilter::new(vec![1.0], 16_000, 1).unwrap()));
    let store = build_dataset(&manifest, &rirs, &dir.join("out")).unwrap();

    let cfg = TrainConfig {
        epochs, batch_size: batch, initial_lr: lr, seed, checkpoint_every: 1000,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = train(&cfg, &store, Head::IFilt, &dir.join("run"), None).unwrap();
    println!(
        "seed={seed} kind={kind} lr={lr} batch={batch} epochs={epochs} secs={secs}: init {:.6e} final {:.6e} ratio {:.3e} ({:.1?})",
        out.initial_train_loss, out.final_train_loss,
        out.final_train_loss / out.initial_train_loss, t0.elapsed()
    );
}
