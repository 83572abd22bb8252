//! Tensor serialization: STF round trips for f32 tensors and u8 masks, plus
//! PGM export for quick visual inspection.
//!
//! Run with: cargo run --release --example stf_io

use strega::io::{pgm_export, pgm_import, stf_read, stf_read_u8, stf_write, stf_write_u8};
use strega::tensor::ImageTensor;
use strega::RngStream;

fn main() -> strega::Result<()> {
    let dir = std::env::temp_dir().join("strega_stf_demo");
    std::fs::create_dir_all(&dir).map_err(|source| strega::Error::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut rng = RngStream::new(1);
    let t = ImageTensor::from_vec(
        &[4, 8, 8],
        (0..256).map(|_| rng.uniform(-1.0, 1.0) as f32).collect(),
    )?;

    let path = dir.join("volume.stf");
    stf_write(&t, &path)?;
    let back = stf_read(&path)?;
    assert_eq!(back.dims(), t.dims());
    assert_eq!(back.data(), t.data());
    let bytes = std::fs::metadata(&path).unwrap().len();
    println!("f32 round trip ok: {:?}, {} bytes on disk", t.dims(), bytes);

    let mask_data: Vec<u8> = (0..64).map(|i| (i % 3 == 0) as u8).collect();
    let mask_path = dir.join("mask.stf");
    stf_write_u8(&[8, 8], &mask_data, &mask_path)?;
    let (dims, data) = stf_read_u8(&mask_path)?;
    assert_eq!(dims, vec![8, 8]);
    assert_eq!(data, mask_data);
    println!("u8 round trip ok: {dims:?}");

    // PGM is lossy (8-bit, min-max scaled) but good enough for eyeballing
    let slice = ImageTensor::from_vec(&[8, 8], t.data()[..64].to_vec())?;
    let pgm = dir.join("slice.pgm");
    pgm_export(&slice, &pgm)?;
    let img = pgm_import(&pgm)?;
    println!("pgm export/import ok: {:?} -> {}", img.dims(), pgm.display());
    Ok(())
}
