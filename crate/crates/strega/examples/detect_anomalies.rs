//! End-to-end detection on one case: train a small model on healthy data,
//! then find an injected anomaly it has never seen.
//!
//! Run with: cargo run --release --example detect_anomalies

use strega::cevae::{train, ModelParams, TrainConfig};
use strega::config::RunConfig;
use strega::pipeline::{build_training_set, detect, evaluate_case};
use strega::synth::{build_test_suite, SuiteCfg};
use strega::RngStream;

fn main() -> strega::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.side = 32;
    cfg.train_slices = 96;
    let mut rng = RngStream::new(7);

    println!("building training data and fitting the model (a minute or so)...");
    let dataset = build_training_set(&cfg, &mut rng)?;
    let mut params = ModelParams::new(cfg.side, &mut rng.child("init"))?;
    let tc = TrainConfig {
        epochs: 15,
        batch_size: 16,
        lr: 1e-4,
        ..TrainConfig::default()
    };
    let metrics = train(&dataset, &mut params, &tc, &mut rng.child("train"))?;
    println!(
        "trained {} epochs, loss {:.4} -> {:.4}",
        metrics.len(),
        metrics.first().unwrap().total,
        metrics.last().unwrap().total
    );

    let suite = build_test_suite(4, &SuiteCfg::default(), &mut rng.child("suite"))?;
    println!("\n{:<8} {:<16} {:>8} {:>10} {:>10}", "case", "kind", "dice", "pred px", "gt px");
    for case in &suite {
        let (pred, _scores) = detect(&case.image, &params, &cfg)?;
        let record = evaluate_case(case, &params, &cfg)?;
        println!(
            "{:<8} {:<16} {:>8.3} {:>10} {:>10}",
            case.case_id,
            case.provenance.kind,
            record.dice,
            pred.area(),
            case.gt_mask.area()
        );
    }
    Ok(())
}
