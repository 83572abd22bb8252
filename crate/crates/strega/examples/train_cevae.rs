//! Train the context-encoding VAE for a few epochs on a small in-memory
//! dataset and watch the three loss terms fall.
//!
//! Run with: cargo run --release --example train_cevae

use strega::cevae::{train, ModelParams, TrainConfig};
use strega::config::RunConfig;
use strega::pipeline::build_training_set;
use strega::RngStream;

fn main() -> strega::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.side = 32;
    cfg.train_slices = 64;
    let mut rng = RngStream::new(7);

    let dataset = build_training_set(&cfg, &mut rng)?;
    println!("training set: {:?}", dataset.dims());

    let mut params = ModelParams::new(cfg.side, &mut rng.child("init"))?;
    let tc = TrainConfig {
        epochs: 5,
        batch_size: 8,
        lr: 1e-4,
        ..TrainConfig::default()
    };
    let metrics = train(&dataset, &mut params, &tc, &mut rng.child("train"))?;

    println!("{:>5} {:>10} {:>10} {:>10} {:>10}", "epoch", "total", "kl", "vae", "ce");
    for m in &metrics {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            m.epoch, m.total, m.kl, m.rec_vae, m.rec_ce
        );
    }
    let first = metrics.first().unwrap().total;
    let last = metrics.last().unwrap().total;
    println!("loss ratio final/initial: {:.3}", last / first);
    Ok(())
}
