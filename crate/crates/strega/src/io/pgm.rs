//! Binary PGM (P5) export for human inspection of slices and masks.

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;
use std::fs;
use std::path::Path;

/// Write a rank-2 slice as binary PGM, min-max scaled to 0..=255. A constant
/// slice maps to mid-grey 128.
pub fn pgm_export(slice: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let d = slice.dims();
    if d.len() != 2 {
        return Err(Error::Dimension(format!(
            "pgm_export expects rank 2, got {:?}",
            d
        )));
    }
    let (h, w) = (d[0], d[1]);
    let lo = slice.min() as f64;
    let hi = slice.max() as f64;
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    if hi > lo {
        let span = hi - lo;
        bytes.extend(
            slice
                .data()
                .iter()
                .map(|&v| ((v as f64 - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8),
        );
    } else {
        bytes.extend(std::iter::repeat(128u8).take(h * w));
    }
    fs::write(path.as_ref(), bytes).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Read a binary PGM written by `pgm_export`, returning values in [0,1].
pub fn pgm_import(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let bytes = fs::read(path.as_ref()).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let text_end = bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .nth(2)
        .map(|(i, _)| i + 1)
        .ok_or_else(|| Error::Format {
            offset: 0,
            message: "PGM header needs three newline-terminated lines".into(),
        })?;
    let header = std::str::from_utf8(&bytes[..text_end]).map_err(|_| Error::Format {
        offset: 0,
        message: "PGM header is not UTF-8".into(),
    })?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("P5") {
        return Err(Error::Format {
            offset: 0,
            message: "not a binary PGM (missing P5)".into(),
        });
    }
    let mut num = || -> Result<usize> {
        fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Format {
                offset: 0,
                message: "PGM header missing width/height/maxval".into(),
            })
    };
    let w = num()?;
    let h = num()?;
    let maxval = num()?;
    if maxval != 255 {
        return Err(Error::Format {
            offset: 0,
            message: format!("unsupported PGM maxval {maxval}"),
        });
    }
    let payload = &bytes[text_end..];
    if payload.len() != h * w {
        return Err(Error::Format {
            offset: text_end as u64,
            message: format!("PGM payload has {} bytes, expected {}", payload.len(), h * w),
        });
    }
    let data = payload.iter().map(|&b| b as f32 / 255.0).collect();
    ImageTensor::from_vec(&[h, w], data)
}
