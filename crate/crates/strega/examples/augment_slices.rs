//! Training-time augmentation: bias fields, noise, gamma, ghosting, flips,
//! affine shifts and rotations applied consistently to a slice and its
//! segmentation.
//!
//! Run with: cargo run --release --example augment_slices

use strega::preprocess::{augment, segment_tissues, AugmentSpec};
use strega::synth::{make_phantom, PhantomCfg};
use strega::tensor::ImageTensor;
use strega::{RngStream, SegMask};

fn main() -> strega::Result<()> {
    let mut rng = RngStream::new(11);
    let phantom = make_phantom(&PhantomCfg::default(), &mut rng)?;
    let d = phantom.volume.dims().to_vec();
    let (h, w) = (d[1], d[2]);
    let z = d[0] / 2;

    let slice = ImageTensor::from_vec(
        &[h, w],
        phantom.volume.data()[z * h * w..(z + 1) * h * w].to_vec(),
    )?;
    let mut seg_rng = rng.child("segment");
    let seg3d = segment_tissues(&slice, 4, 2, 1.0, &mut seg_rng)?;
    let seg = SegMask::new(&[h, w], seg3d.labels().to_vec())?;

    let spec = AugmentSpec::default();
    let mut aug_rng = rng.child("augment");
    for trial in 0..3 {
        let (aug_img, aug_seg) = augment(&slice, &seg, &spec, &mut aug_rng)?;
        let changed = aug_img
            .data()
            .iter()
            .zip(slice.data())
            .filter(|(a, b)| a != b)
            .count();
        let seg_changed = aug_seg
            .labels()
            .iter()
            .zip(seg.labels())
            .filter(|(a, b)| a != b)
            .count();
        println!(
            "trial {trial}: {changed}/{} pixels changed, {seg_changed} labels moved",
            slice.len()
        );
    }

    // disabled() turns every augmentation off: identity transform
    let none = AugmentSpec::disabled();
    let (same_img, _) = augment(&slice, &seg, &none, &mut aug_rng)?;
    assert_eq!(same_img.data(), slice.data());
    println!("disabled spec leaves the slice bit-identical");
    Ok(())
}
