//! Drive the whole pipeline through the same staged functions the CLI uses:
//! inject -> preprocess -> train -> infer -> eval -> report, all inside a
//! temporary run directory.
//!
//! Run with: cargo run --release --example full_pipeline

use strega::config::RunConfig;
use strega::pipeline::{
    stage_eval, stage_infer, stage_inject, stage_preprocess, stage_report, stage_train,
};

fn main() -> strega::Result<()> {
    let out = std::env::temp_dir().join("strega_full_pipeline");
    let _ = std::fs::remove_dir_all(&out);

    // scaled-down settings so the whole run takes about a minute
    let mut cfg = RunConfig::default();
    cfg.side = 32;
    cfg.train_slices = 64;
    cfg.epochs = 10;
    cfg.n_cases = 6;
    cfg.n_healthy = 2;
    cfg.validate()?;

    println!("run directory: {}", out.display());
    stage_inject(&cfg, &out)?;
    println!("inject: wrote suite/");
    stage_preprocess(&cfg, &out)?;
    println!("preprocess: wrote train/dataset.stf");
    stage_train(&cfg, &out)?;
    println!("train: wrote ckpt/");
    stage_infer(&cfg, &out)?;
    println!("infer: wrote pred/");
    stage_eval(&cfg, &out)?;
    println!("eval: wrote eval/records.jsonl");
    let report = stage_report(&cfg, &out)?;
    println!("\nreport.json:\n{report}");
    Ok(())
}
