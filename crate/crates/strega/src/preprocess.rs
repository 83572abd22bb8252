//! The "simplify the input" stage: tissue segmentation (k-means + ICM as an
//! FSL-FAST stand-in), z-score normalization, bilinear resize, and the
//! training-time augmentation suite.

use crate::error::{Error, Result};
use crate::mask::SegMask;
use crate::rng::RngStream;
use crate::tensor::ImageTensor;

/// Parameters of the augmentation suite. Each augmentation is independently
/// enabled; the numeric fields default to the canonical ranges.
#[derive(Clone, Debug)]
pub struct AugmentSpec {
    pub bias_field: bool,
    pub bias_order: usize,
    pub bias_max_coeff: f64,
    pub gauss_noise: bool,
    pub gauss_noise_sigma_max: f64,
    pub gamma: bool,
    pub gamma_range: (f64, f64),
    pub ghosting: bool,
    pub ghost_count: (usize, usize),
    pub ghost_amplitude: f64,
    pub affine: bool,
    pub affine_degrees: (f64, f64),
    pub rotation: bool,
    pub rotation_degrees: (f64, f64),
    pub flips: bool,
    pub flip_prob: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            bias_field: true,
            bias_order: 3,
            bias_max_coeff: 0.5,
            gauss_noise: true,
            gauss_noise_sigma_max: 0.25,
            gamma: true,
            gamma_range: (-0.3, 0.3),
            ghosting: true,
            ghost_count: (4, 10),
            ghost_amplitude: 0.1,
            affine: true,
            affine_degrees: (-35.0, 35.0),
            rotation: true,
            rotation_degrees: (-15.0, 15.0),
            flips: true,
            flip_prob: 0.5,
        }
    }
}

impl AugmentSpec {
    /// Every augmentation switched off; `augment` becomes the identity.
    pub fn disabled() -> Self {
        AugmentSpec {
            bias_field: false,
            gauss_noise: false,
            gamma: false,
            ghosting: false,
            affine: false,
            rotation: false,
            flips: false,
            ..AugmentSpec::default()
        }
    }
}

/// Tissue segmentation: k-means over intensities with quantile-initialized
/// centroids, then `icm_iters` sweeps of iterated-conditional-modes smoothing
/// under a Potts prior of strength `beta` over in-slice 4-neighborhoods.
/// Labels are reordered by ascending centroid intensity. Accepts a 2D slice
/// or a 3D volume (first axis = slice index).
pub fn segment_tissues(
    volume: &ImageTensor,
    k: usize,
    icm_iters: usize,
    beta: f64,
    _rng: &mut RngStream,
) -> Result<SegMask> {
    let dims = volume.dims().to_vec();
    if !(dims.len() == 2 || dims.len() == 3) {
        return Err(Error::Dimension(format!(
            "segment_tissues expects a 2D slice or 3D volume, got rank {}",
            dims.len()
        )));
    }
    if k == 0 || k > 4 {
        return Err(Error::Invalid(format!(
            "cluster count {k} outside 1..=4 (labels must fit a SegMask)"
        )));
    }

    // min-max normalize internally so clustering is invariant under positive
    // affine intensity rescalings of the input
    let lo = volume.min() as f64;
    let hi = volume.max() as f64;
    let span = hi - lo;
    let xs: Vec<f64> = if span > 0.0 {
        volume.data().iter().map(|&v| (v as f64 - lo) / span).collect()
    } else {
        volume.data().iter().map(|_| 0.0).collect()
    };

    let mut sorted = xs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 1usize;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    if distinct < k {
        return Err(Error::DegenerateInput(format!(
            "{distinct} distinct intensity values, need at least {k}"
        )));
    }

    // centroids at the (2i+1)/(2k) quantiles of the sorted intensities
    let mut centroids: Vec<f64> = (0..k)
        .map(|i| quantile(&sorted, (2 * i + 1) as f64 / (2 * k) as f64))
        .collect();

    // Lloyd iterations until the assignment is stable
    let mut labels = vec![0u8; xs.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (l, &x) in labels.iter_mut().zip(&xs) {
            let next = nearest(&centroids, x);
            if next != *l {
                *l = next;
                changed = true;
            }
        }
        let mut sums = vec![0.0f64; k];
        let mut counts = vec![0usize; k];
        for (&l, &x) in labels.iter().zip(&xs) {
            sums[l as usize] += x;
            counts[l as usize] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            }
        }
        // Reseed an empty cluster at the worst-fit value. Quantile init can
        // place several centroids on the same value when one intensity
        // dominates (e.g. a constant background covering most of a volume),
        // and without reseeding those clusters stay empty and the remaining
        // intensity range collapses into a single label. One reseed per
        // iteration so two empty clusters never land on the same value.
        let mut reseeded = false;
        if let Some(c) = (0..k).find(|&c| counts[c] == 0) {
            let mut far_x = centroids[c];
            let mut far_d = -1.0f64;
            for (&l, &x) in labels.iter().zip(&xs) {
                let d = (x - centroids[l as usize]).abs();
                if d > far_d {
                    far_d = d;
                    far_x = x;
                }
            }
            centroids[c] = far_x;
            reseeded = true;
        }
        if !changed && !reseeded {
            break;
        }
    }

    // reorder labels by ascending centroid intensity
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centroids[a].partial_cmp(&centroids[b]).unwrap());
    let mut relabel = vec![0u8; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new as u8;
    }
    for l in labels.iter_mut() {
        *l = relabel[*l as usize];
    }
    let mut sorted_centroids: Vec<f64> = order.iter().map(|&i| centroids[i]).collect();
    centroids.clear();
    centroids.append(&mut sorted_centroids);

    if icm_iters > 0 {
        // data term scaled by the mean within-cluster variance, HMRF style
        let mut ss = 0.0f64;
        for (&l, &x) in labels.iter().zip(&xs) {
            let d = x - centroids[l as usize];
            ss += d * d;
        }
        let s2 = (ss / xs.len() as f64).max(1e-6);

        let (d0, h, w) = match dims.len() {
            2 => (1, dims[0], dims[1]),
            _ => (dims[0], dims[1], dims[2]),
        };
        for _ in 0..icm_iters {
            for z in 0..d0 {
                for y in 0..h {
                    for x_i in 0..w {
                        let idx = (z * h + y) * w + x_i;
                        let mut best = labels[idx];
                        let mut best_e = f64::INFINITY;
                        for (c, &cent) in centroids.iter().enumerate() {
                            let d = xs[idx] - cent;
                            let mut e = d * d / (2.0 * s2);
                            let mut disagree = 0usize;
                            if y > 0 && labels[idx - w] != c as u8 {
                                disagree += 1;
                            }
                            if y + 1 < h && labels[idx + w] != c as u8 {
                                disagree += 1;
                            }
                            if x_i > 0 && labels[idx - 1] != c as u8 {
                                disagree += 1;
                            }
                            if x_i + 1 < w && labels[idx + 1] != c as u8 {
                                disagree += 1;
                            }
                            e += beta * disagree as f64;
                            if e < best_e {
                                best_e = e;
                                best = c as u8;
                            }
                        }
                        labels[idx] = best;
                    }
                }
            }
        }
    }

    SegMask::new(&dims, labels)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < n {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[n - 1]
    }
}

fn nearest(centroids: &[f64], x: f64) -> u8 {
    let mut best = 0u8;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let d = (x - c).abs();
        if d < best_d {
            best_d = d;
            best = i as u8;
        }
    }
    best
}

/// Map tissue labels to model-input intensities {0, 1/3, 2/3, 1}.
pub fn seg_to_image(seg: &SegMask) -> ImageTensor {
    let data = seg.labels().iter().map(|&l| l as f32 / 3.0).collect();
    ImageTensor::from_vec(seg.dims(), data).expect("seg dims are valid tensor dims")
}

/// Shift-and-scale to zero mean and unit (population) variance.
pub fn zscore_normalize(t: &ImageTensor) -> Result<ImageTensor> {
    if t.len() < 2 {
        return Err(Error::DegenerateInput(
            "z-score needs at least 2 elements".into(),
        ));
    }
    let mean = t.mean();
    let var = t.variance();
    if var <= 0.0 || !var.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "z-score undefined for variance {var}"
        )));
    }
    let inv_std = 1.0 / var.sqrt();
    Ok(t.map(|v| ((v as f64 - mean) * inv_std) as f32))
}

/// Bilinear resize with half-pixel centers and edge-clamped sampling.
pub fn resize_bilinear(slice: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    let d = slice.dims();
    if d.len() != 2 {
        return Err(Error::Dimension(format!(
            "resize_bilinear expects rank 2, got {:?}",
            d
        )));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension("resize target has a zero dim".into()));
    }
    let (h, w) = (d[0], d[1]);
    if out_h == h && out_w == w {
        return Ok(slice.clone());
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = ImageTensor::zeros(&[out_h, out_w]);
    for oy in 0..out_h {
        let src_y = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = src_y.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = src_y - y0 as f64;
        for ox in 0..out_w {
            let src_x = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = src_x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = src_x - x0 as f64;
            let v00 = slice.at(&[y0, x0]) as f64;
            let v01 = slice.at(&[y0, x1]) as f64;
            let v10 = slice.at(&[y1, x0]) as f64;
            let v11 = slice.at(&[y1, x1]) as f64;
            let top = v00 * (1.0 - fx) + v01 * fx;
            let bot = v10 * (1.0 - fx) + v11 * fx;
            out.set(&[oy, ox], (top * (1.0 - fy) + bot * fy) as f32);
        }
    }
    Ok(out)
}

/// Interpolation used by the rotation resamplers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    Nearest,
    Bilinear,
}

pub fn flip_horizontal(slice: &ImageTensor) -> ImageTensor {
    let (h, w) = (slice.dims()[0], slice.dims()[1]);
    let mut out = ImageTensor::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            out.set(&[y, x], slice.at(&[y, w - 1 - x]));
        }
    }
    out
}

pub fn flip_vertical(slice: &ImageTensor) -> ImageTensor {
    let (h, w) = (slice.dims()[0], slice.dims()[1]);
    let mut out = ImageTensor::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            out.set(&[y, x], slice.at(&[h - 1 - y, x]));
        }
    }
    out
}

fn flip_seg_horizontal(seg: &SegMask) -> SegMask {
    let (h, w) = (seg.dims()[0], seg.dims()[1]);
    let src = seg.labels();
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = src[y * w + (w - 1 - x)];
        }
    }
    SegMask::new(&[h, w], out).expect("flip preserves dims and labels")
}

fn flip_seg_vertical(seg: &SegMask) -> SegMask {
    let (h, w) = (seg.dims()[0], seg.dims()[1]);
    let src = seg.labels();
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = src[(h - 1 - y) * w + x];
        }
    }
    SegMask::new(&[h, w], out).expect("flip preserves dims and labels")
}

/// Rotate about the image center by `degrees` (counter-clockwise). Pixels
/// sampled from outside the source become 0.
pub fn rotate_image(slice: &ImageTensor, degrees: f64, interp: Interp) -> ImageTensor {
    let (h, w) = (slice.dims()[0], slice.dims()[1]);
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut out = ImageTensor::zeros(&[h, w]);
    for y in 0..h {
        for x in 0..w {
            // inverse map: rotate the output coordinate by -degrees
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let src_y = cy + dy * cos - dx * sin;
            let src_x = cx + dy * sin + dx * cos;
            let v = match interp {
                Interp::Nearest => {
                    let iy = src_y.round();
                    let ix = src_x.round();
                    if iy >= 0.0 && iy < h as f64 && ix >= 0.0 && ix < w as f64 {
                        slice.at(&[iy as usize, ix as usize]) as f64
                    } else {
                        0.0
                    }
                }
                Interp::Bilinear => {
                    if src_y >= 0.0 && src_y <= (h - 1) as f64 && src_x >= 0.0
                        && src_x <= (w - 1) as f64
                    {
                        let y0 = src_y.floor() as usize;
                        let y1 = (y0 + 1).min(h - 1);
                        let x0 = src_x.floor() as usize;
                        let x1 = (x0 + 1).min(w - 1);
                        let fy = src_y - y0 as f64;
                        let fx = src_x - x0 as f64;
                        let top = slice.at(&[y0, x0]) as f64 * (1.0 - fx)
                            + slice.at(&[y0, x1]) as f64 * fx;
                        let bot = slice.at(&[y1, x0]) as f64 * (1.0 - fx)
                            + slice.at(&[y1, x1]) as f64 * fx;
                        top * (1.0 - fy) + bot * fy
                    } else {
                        0.0
                    }
                }
            };
            out.set(&[y, x], v as f32);
        }
    }
    out
}

fn rotate_seg(seg: &SegMask, degrees: f64) -> SegMask {
    let (h, w) = (seg.dims()[0], seg.dims()[1]);
    let src = seg.labels();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let iy = (cy + dy * cos - dx * sin).round();
            let ix = (cx + dy * sin + dx * cos).round();
            if iy >= 0.0 && iy < h as f64 && ix >= 0.0 && ix < w as f64 {
                out[y * w + x] = src[iy as usize * w + ix as usize];
            }
        }
    }
    SegMask::new(&[h, w], out).expect("rotation preserves dims and labels")
}

/// Apply the augmentation suite. Intensity augmentations (bias field, noise,
/// gamma, ghosting) touch the image only; spatial augmentations (flips,
/// affine, rotation) are applied identically to image and segmentation, with
/// nearest-neighbour resampling for the labels. Disabled augmentations draw
/// nothing from `rng`.
pub fn augment(
    slice: &ImageTensor,
    seg: &SegMask,
    spec: &AugmentSpec,
    rng: &mut RngStream,
) -> Result<(ImageTensor, SegMask)> {
    let d = slice.dims();
    if d.len() != 2 {
        return Err(Error::Dimension(format!(
            "augment expects a 2D slice, got {:?}",
            d
        )));
    }
    if seg.dims() != d {
        return Err(Error::ShapeMismatch {
            axis: 0,
            expected: d[0],
            got: seg.dims()[0],
            context: "augment image/seg dims".into(),
        });
    }
    let (h, w) = (d[0], d[1]);
    let mut img = slice.clone();
    let mut lab = seg.clone();

    if spec.bias_field {
        // multiplicative field: exp of a low-order 2D polynomial over [-1,1]^2
        let n_terms = (spec.bias_order + 1) * (spec.bias_order + 2) / 2;
        let coeffs: Vec<f64> = (0..n_terms)
            .map(|_| rng.uniform(-spec.bias_max_coeff, spec.bias_max_coeff))
            .collect();
        for y in 0..h {
            let ny = if h > 1 { 2.0 * y as f64 / (h - 1) as f64 - 1.0 } else { 0.0 };
            for x in 0..w {
                let nx = if w > 1 { 2.0 * x as f64 / (w - 1) as f64 - 1.0 } else { 0.0 };
                let mut poly = 0.0;
                let mut t = 0;
                for i in 0..=spec.bias_order {
                    for j in 0..=(spec.bias_order - i) {
                        poly += coeffs[t] * ny.powi(i as i32) * nx.powi(j as i32);
                        t += 1;
                    }
                }
                let v = img.at(&[y, x]) as f64 * poly.exp();
                img.set(&[y, x], v as f32);
            }
        }
    }

    if spec.gauss_noise {
        let sigma = rng.uniform(0.0, spec.gauss_noise_sigma_max);
        for v in img.data_mut() {
            *v = (*v as f64 + sigma * rng.normal()) as f32;
        }
    }

    if spec.gamma {
        // power law applied on a min-max-scaled copy (the data may be
        // z-scored and contain negatives), then mapped back
        let g = rng.uniform(spec.gamma_range.0, spec.gamma_range.1).exp();
        let lo = img.min() as f64;
        let hi = img.max() as f64;
        if hi > lo {
            let span = hi - lo;
            for v in img.data_mut() {
                let u = ((*v as f64 - lo) / span).clamp(0.0, 1.0);
                *v = (lo + u.powf(g) * span) as f32;
            }
        }
    }

    if spec.ghosting {
        let n = rng.int_in(spec.ghost_count.0, spec.ghost_count.1);
        let axis = rng.below(2);
        let len = if axis == 0 { h } else { w };
        let scale = spec.ghost_amplitude / n as f64;
        let base = img.clone();
        for j in 1..=n {
            let shift = j * len / n % len;
            for y in 0..h {
                for x in 0..w {
                    let (sy, sx) = if axis == 0 {
                        ((y + shift) % h, x)
                    } else {
                        (y, (x + shift) % w)
                    };
                    let v = img.at(&[y, x]) as f64 + scale * base.at(&[sy, sx]) as f64;
                    img.set(&[y, x], v as f32);
                }
            }
        }
    }

    if spec.flips {
        if rng.coin(spec.flip_prob) {
            img = flip_horizontal(&img);
            lab = flip_seg_horizontal(&lab);
        }
        if rng.coin(spec.flip_prob) {
            img = flip_vertical(&img);
            lab = flip_seg_vertical(&lab);
        }
    }

    if spec.affine {
        let deg = rng.uniform(spec.affine_degrees.0, spec.affine_degrees.1);
        img = rotate_image(&img, deg, Interp::Nearest);
        lab = rotate_seg(&lab, deg);
    }

    if spec.rotation {
        let deg = rng.uniform(spec.rotation_degrees.0, spec.rotation_degrees.1);
        img = rotate_image(&img, deg, Interp::Bilinear);
        lab = rotate_seg(&lab, deg);
    }

    Ok((img, lab))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = RngStream::new(seed);
        let data = (0..h * w).map(|_| rng.uniform(0.0, 1.0) as f32).collect();
        ImageTensor::from_vec(&[h, w], data).unwrap()
    }

    #[test]
    fn segments_four_flat_regions_exactly() {
        let mut data = Vec::new();
        for band in 0..4 {
            let v = [0.0f32, 0.33, 0.66, 1.0][band];
            data.extend(std::iter::repeat(v).take(4 * 16));
        }
        let img = ImageTensor::from_vec(&[16, 16], data).unwrap();
        let mut rng = RngStream::new(1);
        let seg = segment_tissues(&img, 4, 5, 1.0, &mut rng).unwrap();
        for (i, &l) in seg.labels().iter().enumerate() {
            assert_eq!(l as usize, i / (4 * 16), "pixel {i}");
        }
    }

    #[test]
    fn plain_kmeans_matches_bruteforce_oracle() {
        // independent Lloyd implementation with quantile init, naive loops
        fn oracle_kmeans(xs: &[f64], k: usize) -> Vec<u8> {
            let mut sorted = xs.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let mut cents: Vec<f64> = (0..k)
                .map(|i| {
                    let pos = (2 * i + 1) as f64 / (2 * k) as f64 * (n - 1) as f64;
                    let lo = pos.floor() as usize;
                    let frac = pos - lo as f64;
                    if lo + 1 < n {
                        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
                    } else {
                        sorted[n - 1]
                    }
                })
                .collect();
            let mut labels = vec![0u8; n];
            loop {
                let mut changed = false;
                for (i, &x) in xs.iter().enumerate() {
                    let mut best = 0u8;
                    let mut bd = f64::INFINITY;
                    for (c, &cent) in cents.iter().enumerate() {
                        if (x - cent).abs() < bd {
                            bd = (x - cent).abs();
                            best = c as u8;
                        }
                    }
                    if labels[i] != best {
                        labels[i] = best;
                        changed = true;
                    }
                }
                for c in 0..k {
                    let members: Vec<f64> = xs
                        .iter()
                        .zip(&labels)
                        .filter(|(_, &l)| l as usize == c)
                        .map(|(&x, _)| x)
                        .collect();
                    if !members.is_empty() {
                        cents[c] = members.iter().sum::<f64>() / members.len() as f64;
                    }
                }
                if !changed {
                    break;
                }
            }
            // order labels by centroid
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| cents[a].partial_cmp(&cents[b]).unwrap());
            let mut relabel = vec![0u8; k];
            for (new, &old) in order.iter().enumerate() {
                relabel[old] = new as u8;
            }
            labels.iter().map(|&l| relabel[l as usize]).collect()
        }

        let img = random_image(16, 16, 9);
        let lo = img.min() as f64;
        let hi = img.max() as f64;
        let xs: Vec<f64> = img
            .data()
            .iter()
            .map(|&v| (v as f64 - lo) / (hi - lo))
            .collect();
        let expected = oracle_kmeans(&xs, 4);
        let mut rng = RngStream::new(2);
        let seg = segment_tissues(&img, 4, 0, 1.0, &mut rng).unwrap();
        assert_eq!(seg.labels(), expected.as_slice());
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = ImageTensor::filled(&[8, 8], 0.5);
        let mut rng = RngStream::new(3);
        let err = segment_tissues(&img, 4, 5, 1.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)), "{err:?}");
    }

    #[test]
    fn segmentation_invariant_under_positive_affine_rescale() {
        let img = random_image(24, 24, 11);
        let scaled = img.map(|v| 2.5 * v + 1.25);
        let mut r1 = RngStream::new(4);
        let mut r2 = RngStream::new(4);
        let a = segment_tissues(&img, 4, 3, 1.0, &mut r1).unwrap();
        let b = segment_tissues(&scaled, 4, 3, 1.0, &mut r2).unwrap();
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn zscore_two_point_case() {
        let t = ImageTensor::from_vec(&[2], vec![0.0, 2.0]).unwrap();
        let z = zscore_normalize(&t).unwrap();
        assert!((z.data()[0] + 1.0).abs() < 1e-6);
        assert!((z.data()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zscore_statistics_and_idempotence() {
        let t = random_image(16, 16, 21);
        let z = zscore_normalize(&t).unwrap();
        assert!(z.mean().abs() < 1e-6);
        assert!((z.variance() - 1.0).abs() < 1e-5);
        let zz = zscore_normalize(&z).unwrap();
        for (a, b) in z.data().iter().zip(zz.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zscore_zero_variance_errors() {
        let t = ImageTensor::filled(&[4, 4], 3.0);
        assert!(matches!(
            zscore_normalize(&t),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = ImageTensor::filled(&[5, 7], 0.42);
        let r = resize_bilinear(&c, 9, 3).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.42).abs() < 1e-6));

        let img = random_image(6, 6, 31);
        let same = resize_bilinear(&img, 6, 6).unwrap();
        assert_eq!(img.data(), same.data());
    }

    #[test]
    fn resize_matches_halfpixel_oracle() {
        let img = ImageTensor::from_vec(&[2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = resize_bilinear(&img, 4, 4).unwrap();
        // scalar oracle per output pixel
        for oy in 0..4 {
            for ox in 0..4 {
                let sy = ((oy as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let sx = ((ox as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let y0 = sy.floor();
                let x0 = sx.floor();
                let fy = sy - y0;
                let fx = sx - x0;
                let v = |y: f64, x: f64| img.at(&[y.min(1.0) as usize, x.min(1.0) as usize]) as f64;
                let want = v(y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + v(y0, x0 + 1.0) * (1.0 - fy) * fx
                    + v(y0 + 1.0, x0) * fy * (1.0 - fx)
                    + v(y0 + 1.0, x0 + 1.0) * fy * fx;
                assert!(
                    (out.at(&[oy, ox]) as f64 - want).abs() < 1e-6,
                    "pixel ({oy},{ox})"
                );
            }
        }
    }

    #[test]
    fn resize_stays_within_input_range() {
        let img = random_image(7, 5, 41);
        let (lo, hi) = (img.min(), img.max());
        for (oh, ow) in [(3, 9), (13, 2), (20, 20)] {
            let out = resize_bilinear(&img, oh, ow).unwrap();
            assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
        }
    }

    #[test]
    fn resize_rejects_zero_dim() {
        let img = random_image(4, 4, 1);
        assert!(resize_bilinear(&img, 0, 4).is_err());
    }

    #[test]
    fn disabled_augment_is_identity() {
        let img = random_image(12, 12, 51);
        let mut rng = RngStream::new(5);
        let seg = segment_tissues(&img, 3, 0, 1.0, &mut rng).unwrap();
        let (img2, seg2) = augment(&img, &seg, &AugmentSpec::disabled(), &mut rng).unwrap();
        assert_eq!(img.data(), img2.data());
        assert_eq!(seg.labels(), seg2.labels());
    }

    #[test]
    fn zero_bias_coefficients_are_identity() {
        let img = random_image(10, 10, 52);
        let seg = SegMask::zeros(&[10, 10]);
        let spec = AugmentSpec {
            bias_field: true,
            bias_max_coeff: 0.0,
            ..AugmentSpec::disabled()
        };
        let mut rng = RngStream::new(6);
        let (img2, _) = augment(&img, &seg, &spec, &mut rng).unwrap();
        assert_eq!(img.data(), img2.data());
    }

    #[test]
    fn double_horizontal_flip_is_identity() {
        let img = random_image(9, 13, 53);
        let back = flip_horizontal(&flip_horizontal(&img));
        assert_eq!(img.data(), back.data());
    }

    #[test]
    fn flips_keep_image_and_seg_aligned() {
        let img = random_image(14, 14, 54);
        let mut srng = RngStream::new(7);
        let seg = segment_tissues(&img, 4, 0, 1.0, &mut srng).unwrap();
        let spec = AugmentSpec {
            flips: true,
            flip_prob: 1.0,
            ..AugmentSpec::disabled()
        };
        let mut rng = RngStream::new(8);
        let (img2, seg2) = augment(&img, &seg, &spec, &mut rng).unwrap();
        // both flips fire with prob 1: seg lookup at the mapped coordinate
        // must agree exactly
        let (h, w) = (14, 14);
        for y in 0..h {
            for x in 0..w {
                assert_eq!(
                    seg2.labels()[y * w + x],
                    seg.labels()[(h - 1 - y) * w + (w - 1 - x)]
                );
                assert_eq!(
                    img2.at(&[y, x]),
                    img.at(&[h - 1 - y, w - 1 - x])
                );
            }
        }
    }

    #[test]
    fn rotation_zero_degrees_is_identity() {
        let img = random_image(8, 8, 55);
        let out = rotate_image(&img, 0.0, Interp::Bilinear);
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
