//! The evaluation toolbox: Dice, AUPRC, bounding boxes, summary statistics
//! and the paired t-test used to compare model variants.
//!
//! Run with: cargo run --release --example evaluate_metrics

use strega::evaluate::{
    auprc, bbox_iou, bounding_boxes, dice, paired_t_test, summary_stats,
};
use strega::tensor::ImageTensor;
use strega::BinMask;

fn main() -> strega::Result<()> {
    // two overlapping 2D masks
    let (h, w) = (32, 32);
    let mut pred = BinMask::zeros(&[h, w]);
    let mut gt = BinMask::zeros(&[h, w]);
    for y in 8..16 {
        for x in 8..16 {
            gt.set(&[y, x], 1);
        }
    }
    for y in 10..18 {
        for x in 10..18 {
            pred.set(&[y, x], 1);
        }
    }
    println!("dice(pred, gt) = {:.4}", dice(&pred, &gt)?);

    // AUPRC from continuous scores: perfect scores give area 1
    let scores = ImageTensor::from_vec(
        &[h, w],
        gt.data().iter().map(|&v| v as f32).collect(),
    )?;
    println!("auprc(perfect scores) = {:.4}", auprc(&scores, &gt)?);

    let boxes_pred = bounding_boxes(&pred)?;
    let boxes_gt = bounding_boxes(&gt)?;
    println!("pred boxes {:?}, gt boxes {:?}", boxes_pred, boxes_gt);
    let a: Vec<f64> = boxes_pred[0].iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = boxes_gt[0].iter().map(|&v| v as f64).collect();
    println!("bbox IoU = {:.4}", bbox_iou(&a, &b)?);

    // summary statistics and a paired comparison of two score sets
    let full = [0.71, 0.64, 0.69, 0.75, 0.66, 0.72, 0.68, 0.70];
    let ablation = [0.66, 0.60, 0.67, 0.69, 0.64, 0.66, 0.65, 0.66];
    let stats = summary_stats(&full)?;
    println!(
        "full model dice: mean {:.3}, std {:.3}, median {:.3}",
        stats.mean, stats.std, stats.median
    );
    let (t, df, p) = paired_t_test(&full, &ablation)?;
    println!("paired t-test: t = {t:.3}, df = {df}, p = {p:.4}");
    Ok(())
}
