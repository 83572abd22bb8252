//! Verify the analytic backward pass against central finite differences on a
//! small model, with the whole computation rerun in f64.
//!
//! Run with: cargo run --release --example gradient_check

use strega::cevae::{finite_diff_check, ModelParams};
use strega::tensor::Tensor;
use strega::RngStream;

fn main() -> strega::Result<()> {
    let side = 16;
    let rng = RngStream::new(3);
    let model = ModelParams::new(side, &mut rng.child("init"))?;

    let mut data_rng = rng.child("data");
    let batch = Tensor::from_vec(
        &[2, 1, side, side],
        (0..2 * side * side)
            .map(|_| data_rng.uniform(0.0, 1.0) as f32)
            .collect(),
    )?;

    let start = std::time::Instant::now();
    let max_rel = finite_diff_check(&model, &batch, &mut rng.child("gradcheck"))?;
    println!(
        "max relative gradient error over sampled parameters: {max_rel:.3e} ({:.1?})",
        start.elapsed()
    );
    assert!(max_rel < 1e-4, "analytic and numeric gradients disagree");
    println!("analytic backward pass matches finite differences");
    Ok(())
}
