//! Generate an anomaly-free brain phantom and export a few slices as PGM.
//!
//! Run with: cargo run --release --example generate_phantom

use strega::io::pgm_export;
use strega::synth::{make_phantom, PhantomCfg, TISSUE_INTENSITY};
use strega::tensor::ImageTensor;
use strega::RngStream;

fn main() -> strega::Result<()> {
    let cfg = PhantomCfg::default();
    let mut rng = RngStream::new(42);
    let phantom = make_phantom(&cfg, &mut rng)?;

    let d = phantom.volume.dims();
    println!("phantom volume: {:?}, values in [0,1]", d);
    println!("brain voxels: {}", phantom.brain_mask.area());
    println!("tissue intensities (bg, CSF, GM, WM): {:?}", TISSUE_INTENSITY);

    // label histogram from the ground-truth segmentation
    let mut hist = [0usize; 4];
    for &l in phantom.tissue_gt.labels() {
        hist[l as usize] += 1;
    }
    println!("label histogram (bg, CSF, GM, WM): {:?}", hist);

    let out_dir = std::env::temp_dir().join("strega_phantom");
    std::fs::create_dir_all(&out_dir).map_err(|source| strega::Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let (depth, h, w) = (d[0], d[1], d[2]);
    for z in [depth / 4, depth / 2, 3 * depth / 4] {
        let slice = ImageTensor::from_vec(
            &[h, w],
            phantom.volume.data()[z * h * w..(z + 1) * h * w].to_vec(),
        )?;
        let path = out_dir.join(format!("slice_{z:02}.pgm"));
        pgm_export(&slice, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
