//! Residual-to-mask postprocessing: clamp, Otsu threshold, morphological
//! opening and small-component removal, step by step.
//!
//! Run with: cargo run --release --example postprocess_masks

use strega::postprocess::{
    area_filter, clamp_negatives, morph_open, otsu_threshold, run_postprocess, PostprocConfig,
};
use strega::tensor::ImageTensor;
use strega::RngStream;

fn main() -> strega::Result<()> {
    // a synthetic residual slice: noise floor, one real blob, some speckles
    let (h, w) = (64, 64);
    let mut rng = RngStream::new(5);
    let mut data = vec![0.0f32; h * w];
    for v in data.iter_mut() {
        *v = (rng.normal() * 0.05) as f32;
    }
    for y in 20..30 {
        for x in 35..45 {
            data[y * w + x] = 0.8 + (rng.normal() * 0.05) as f32;
        }
    }
    for &(y, x) in &[(5, 5), (50, 10), (60, 60)] {
        data[y * w + x] = 0.9; // single-pixel speckles
    }
    let residual = ImageTensor::from_vec(&[1, h, w], data)?;

    let clamped = clamp_negatives(&residual);
    let slice = ImageTensor::from_vec(&[h, w], clamped.data().to_vec())?;
    let (threshold, raw_mask) = otsu_threshold(&slice);
    println!("otsu threshold {threshold:.4}: {} pixels above", raw_mask.area());

    let opened = morph_open(&raw_mask, 3)?;
    println!("after 3x3 opening: {} pixels", opened.area());

    let filtered = area_filter(&opened, 10)?;
    println!("after area filter (>= 10 px): {} pixels", filtered.area());

    // the full chain over a volume in one call
    let cfg = PostprocConfig::at_side(64);
    let mask = run_postprocess(&residual, &cfg)?;
    println!(
        "run_postprocess: {} pixels across {:?}",
        mask.area(),
        mask.dims()
    );
    Ok(())
}
