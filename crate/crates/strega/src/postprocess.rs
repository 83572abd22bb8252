//! Residual-to-mask conversion: negative clamp, per-slice Otsu thresholding,
//! morphological opening, area filtering, size restore, and 3D stacking.

use crate::error::{Error, Result};
use crate::mask::BinMask;
use crate::tensor::ImageTensor;

/// Postprocessing chain settings.
#[derive(Clone, Debug)]
pub struct PostprocConfig {
    /// square structuring-element side; must be odd
    pub se_size: usize,
    /// minimum connected-component size kept, in pixels at working resolution
    pub area_threshold: usize,
    /// spatial dims the final mask is restored to (nearest-neighbour)
    pub restore_h: usize,
    pub restore_w: usize,
}

impl PostprocConfig {
    /// Defaults at a given working side: SE 3, area threshold 10 scaled by
    /// (side/64)^2, restore to the working size.
    pub fn at_side(side: usize) -> Self {
        PostprocConfig {
            se_size: 3,
            area_threshold: (10 * side * side + 64 * 64 - 1) / (64 * 64),
            restore_h: side,
            restore_w: side,
        }
    }
}

/// max(residual, 0) elementwise.
pub fn clamp_negatives(residual: &ImageTensor) -> ImageTensor {
    residual.map(|v| v.max(0.0))
}

/// Otsu's threshold over a 256-bin histogram spanning the slice's own
/// [min, max]; ties break toward the lower threshold. The mask marks pixels
/// strictly above the threshold; a constant slice yields an all-zero mask.
pub fn otsu_threshold(slice: &ImageTensor) -> (f32, BinMask) {
    let lo = slice.min() as f64;
    let hi = slice.max() as f64;
    if !(hi > lo) {
        return (lo as f32, BinMask::zeros(slice.dims()));
    }
    const BINS: usize = 256;
    let span = hi - lo;
    let mut hist = [0usize; BINS];
    for &v in slice.data() {
        let b = (((v as f64 - lo) / span * BINS as f64) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = slice.len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, &c)| b as f64 * c as f64)
        .sum();

    // threshold candidate t: classes are bins <= t and bins > t
    let mut best_bin = 0usize;
    let mut best_var = f64::NEG_INFINITY;
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    for (t, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (total_sum - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best_bin = t;
        }
    }
    // threshold at the upper edge of the chosen bin
    let threshold = lo + (best_bin + 1) as f64 / BINS as f64 * span;
    let data = slice
        .data()
        .iter()
        .map(|&v| ((v as f64) > threshold) as u8)
        .collect();
    (
        threshold as f32,
        BinMask::new(slice.dims(), data).expect("mask dims mirror slice"),
    )
}

/// Bin index chosen by `otsu_threshold` for the given slice (for oracle
/// comparisons); `None` for a constant slice.
pub fn otsu_bin_index(slice: &ImageTensor) -> Option<usize> {
    let lo = slice.min() as f64;
    let hi = slice.max() as f64;
    if !(hi > lo) {
        return None;
    }
    let (threshold, _) = otsu_threshold(slice);
    let span = hi - lo;
    let bin = ((threshold as f64 - lo) / span * 256.0).round() as usize - 1;
    Some(bin)
}

fn erode(mask: &BinMask, se: usize) -> BinMask {
    let (h, w) = (mask.dims()[0], mask.dims()[1]);
    let r = (se / 2) as i64;
    let mut out = BinMask::zeros(mask.dims());
    for y in 0..h as i64 {
        'pix: for x in 0..w as i64 {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    // outside the border counts as background
                    if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                        continue 'pix;
                    }
                    if mask.get(&[yy as usize, xx as usize]) == 0 {
                        continue 'pix;
                    }
                }
            }
            out.set(&[y as usize, x as usize], 1);
        }
    }
    out
}

fn dilate(mask: &BinMask, se: usize) -> BinMask {
    let (h, w) = (mask.dims()[0], mask.dims()[1]);
    let r = (se / 2) as i64;
    let mut out = BinMask::zeros(mask.dims());
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            'search: for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
                        continue;
                    }
                    if mask.get(&[yy as usize, xx as usize]) == 1 {
                        out.set(&[y as usize, x as usize], 1);
                        break 'search;
                    }
                }
            }
        }
    }
    out
}

/// Morphological opening: erosion then dilation with a square structuring
/// element of side `se_size` (odd). The border is treated as background.
pub fn morph_open(mask: &BinMask, se_size: usize) -> Result<BinMask> {
    if se_size % 2 == 0 || se_size == 0 {
        return Err(Error::Invalid(format!(
            "structuring element side {se_size} must be odd"
        )));
    }
    if mask.dims().len() != 2 {
        return Err(Error::Dimension(format!(
            "morph_open expects a 2D mask, got {:?}",
            mask.dims()
        )));
    }
    Ok(dilate(&erode(mask, se_size), se_size))
}

/// Remove 4-connected components with fewer than `area_threshold` pixels.
pub fn area_filter(mask: &BinMask, area_threshold: usize) -> Result<BinMask> {
    if mask.dims().len() != 2 {
        return Err(Error::Dimension(format!(
            "area_filter expects a 2D mask, got {:?}",
            mask.dims()
        )));
    }
    let (h, w) = (mask.dims()[0], mask.dims()[1]);
    let mut out = mask.clone();
    let mut seen = vec![false; h * w];
    for start in 0..h * w {
        if mask.data()[start] == 0 || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut component = Vec::new();
        seen[start] = true;
        while let Some(idx) = stack.pop() {
            component.push(idx);
            let (y, x) = (idx / w, idx % w);
            let mut push = |nidx: usize| {
                if !seen[nidx] && mask.data()[nidx] == 1 {
                    seen[nidx] = true;
                    stack.push(nidx);
                }
            };
            if y > 0 {
                push(idx - w);
            }
            if y + 1 < h {
                push(idx + w);
            }
            if x > 0 {
                push(idx - 1);
            }
            if x + 1 < w {
                push(idx + 1);
            }
        }
        if component.len() < area_threshold {
            for idx in component {
                out.data_mut()[idx] = 0;
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour resize of each slice to (orig_h, orig_w), stacked along
/// axis 0 in slice order.
pub fn restore_and_stack(masks: &[BinMask], orig_h: usize, orig_w: usize) -> Result<BinMask> {
    if masks.is_empty() {
        return Err(Error::DegenerateInput("no slices to stack".into()));
    }
    if orig_h == 0 || orig_w == 0 {
        return Err(Error::Dimension("restore target has a zero dim".into()));
    }
    let first = masks[0].dims().to_vec();
    let mut out = BinMask::zeros(&[masks.len(), orig_h, orig_w]);
    for (z, m) in masks.iter().enumerate() {
        if m.dims() != first.as_slice() {
            return Err(Error::Dimension(format!(
                "slice {z} dims {:?} differ from {:?}",
                m.dims(),
                first
            )));
        }
        let (h, w) = (first[0], first[1]);
        for oy in 0..orig_h {
            // half-pixel-center nearest neighbour
            let sy = (((oy as f64 + 0.5) * h as f64 / orig_h as f64 - 0.5).round())
                .clamp(0.0, (h - 1) as f64) as usize;
            for ox in 0..orig_w {
                let sx = (((ox as f64 + 0.5) * w as f64 / orig_w as f64 - 0.5).round())
                    .clamp(0.0, (w - 1) as f64) as usize;
                out.set(&[z, oy, ox], m.get(&[sy, sx]));
            }
        }
    }
    Ok(out)
}

/// The full chain in order: clamp, per-slice Otsu, opening, area filter,
/// restore and stack. `residual` has dims [D,H,W].
pub fn run_postprocess(residual: &ImageTensor, cfg: &PostprocConfig) -> Result<BinMask> {
    let d = residual.dims();
    if d.len() != 3 || d[0] == 0 {
        return Err(Error::Dimension(format!(
            "run_postprocess expects a non-empty [D,H,W] residual, got {:?}",
            d
        )));
    }
    let (depth, h, w) = (d[0], d[1], d[2]);
    let plane = h * w;
    let clamped = clamp_negatives(residual);
    let mut slices = Vec::with_capacity(depth);
    for z in 0..depth {
        let slice = ImageTensor::from_vec(
            &[h, w],
            clamped.data()[z * plane..(z + 1) * plane].to_vec(),
        )?;
        let (_, mask) = otsu_threshold(&slice);
        let opened = morph_open(&mask, cfg.se_size)?;
        let filtered = area_filter(&opened, cfg.area_threshold)?;
        slices.push(filtered);
    }
    restore_and_stack(&slices, cfg.restore_h, cfg.restore_w)
}
