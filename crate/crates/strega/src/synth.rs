//! Anomaly-free phantom generation and the artificial-anomaly injectors with
//! pixel-accurate ground-truth masks.

use crate::error::{Error, Result};
use crate::mask::{BinMask, SegMask};
use crate::rng::RngStream;
use crate::tensor::ImageTensor;
use serde::{Deserialize, Serialize};

/// Canonical tissue intensities, indexed by label (0 = background).
pub const TISSUE_INTENSITY: [f32; 4] = [0.0, 0.9, 0.45, 0.65];

/// Phantom generator settings.
#[derive(Clone, Debug)]
pub struct PhantomCfg {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    /// per-subject center jitter and +/-15% axis scaling
    pub jitter: bool,
    /// smooth +/-0.05 intensity modulation and sigma=0.02 Gaussian noise
    pub noise: bool,
}

impl Default for PhantomCfg {
    fn default() -> Self {
        PhantomCfg {
            depth: 64,
            height: 64,
            width: 64,
            jitter: true,
            noise: true,
        }
    }
}

/// A brain-like test volume with known tissue labels.
#[derive(Clone, Debug)]
pub struct Phantom {
    /// values in [0,1], dims [D,H,W]
    pub volume: ImageTensor,
    pub tissue_gt: SegMask,
    pub brain_mask: BinMask,
}

/// Provenance of an injected anomaly: injector name plus its parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: String,
    pub params: serde_json::Value,
}

/// An anomalous image with its exact ground-truth mask.
#[derive(Clone, Debug)]
pub struct AnomalyCase {
    pub case_id: usize,
    pub image: ImageTensor,
    pub gt_mask: BinMask,
    pub brain_mask: BinMask,
    pub provenance: Provenance,
}

/// Concentric smooth ellipsoids: background 0, an outer CSF ring near 0.9,
/// grey matter near 0.45, a white-matter core near 0.65. Labels: 0=bg, 1=CSF,
/// 2=GM, 3=WM.
pub fn make_phantom(cfg: &PhantomCfg, rng: &mut RngStream) -> Result<Phantom> {
    let (d, h, w) = (cfg.depth, cfg.height, cfg.width);
    if d < 16 || h < 16 || w < 16 {
        return Err(Error::Dimension(format!(
            "phantom dims [{d},{h},{w}] below the 16-voxel minimum"
        )));
    }

    // per-subject geometry
    let (mut cz, mut cy, mut cx) = (
        (d as f64 - 1.0) / 2.0,
        (h as f64 - 1.0) / 2.0,
        (w as f64 - 1.0) / 2.0,
    );
    let (mut az, mut ay, mut ax) = (0.40 * d as f64, 0.40 * h as f64, 0.40 * w as f64);
    if cfg.jitter {
        cz += rng.uniform(-0.05, 0.05) * d as f64;
        cy += rng.uniform(-0.05, 0.05) * h as f64;
        cx += rng.uniform(-0.05, 0.05) * w as f64;
        az *= 1.0 + rng.uniform(-0.15, 0.15);
        ay *= 1.0 + rng.uniform(-0.15, 0.15);
        ax *= 1.0 + rng.uniform(-0.15, 0.15);
    }
    // low-order modulation field coefficients, drawn regardless of use so the
    // label geometry for a seed is independent of the noise toggle
    let mod_coeffs: [f64; 4] = [
        rng.uniform(-0.05, 0.05),
        rng.uniform(-0.05, 0.05),
        rng.uniform(-0.05, 0.05),
        rng.uniform(-0.05, 0.05),
    ];

    let mut volume = ImageTensor::zeros(&[d, h, w]);
    let mut labels = vec![0u8; d * h * w];
    let mut brain = vec![0u8; d * h * w];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let r = (((z as f64 - cz) / az).powi(2)
                    + ((y as f64 - cy) / ay).powi(2)
                    + ((x as f64 - cx) / ax).powi(2))
                .sqrt();
                let label = if r > 1.0 {
                    0u8
                } else if r > 0.85 {
                    1
                } else if r > 0.55 {
                    2
                } else {
                    3
                };
                let idx = (z * h + y) * w + x;
                labels[idx] = label;
                brain[idx] = (label != 0) as u8;
                let mut v = TISSUE_INTENSITY[label as usize] as f64;
                if cfg.noise && label != 0 {
                    let nz = 2.0 * z as f64 / (d - 1) as f64 - 1.0;
                    let ny = 2.0 * y as f64 / (h - 1) as f64 - 1.0;
                    let nx = 2.0 * x as f64 / (w - 1) as f64 - 1.0;
                    v += mod_coeffs[0] * nz + mod_coeffs[1] * ny + mod_coeffs[2] * nx
                        + mod_coeffs[3] * nz * ny;
                    v += 0.02 * rng.normal();
                    v = v.clamp(0.0, 1.0);
                }
                volume.set(&[z, y, x], v as f32);
            }
        }
    }
    Ok(Phantom {
        volume,
        tissue_gt: SegMask::new(&[d, h, w], labels)?,
        brain_mask: BinMask::new(&[d, h, w], brain)?,
    })
}

/// M = B (elementwise) S, min-max normalized to [0,1] over the nonzero
/// support (the zero background acts as the lower reference so the support is
/// preserved), zero elsewhere. A constant support normalizes to 1.0.
pub fn extract_anomaly(b: &ImageTensor, s: &BinMask) -> Result<ImageTensor> {
    if b.dims() != s.dims() {
        return Err(Error::Dimension(format!(
            "extract_anomaly shapes differ: {:?} vs {:?}",
            b.dims(),
            s.dims()
        )));
    }
    if s.area() == 0 {
        return Err(Error::EmptyMask("no nonzero support".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&v, &m) in b.data().iter().zip(s.data()) {
        if m == 1 {
            lo = lo.min(v as f64);
            hi = hi.max(v as f64);
        }
    }
    let lo = lo.min(0.0);
    let mut out = ImageTensor::zeros(b.dims());
    for ((o, &v), &m) in out.data_mut().iter_mut().zip(b.data()).zip(s.data()) {
        if m == 1 {
            *o = if hi > lo {
                ((v as f64 - lo) / (hi - lo)) as f32
            } else {
                1.0
            };
        }
    }
    Ok(out)
}

/// A' = clamp(A + scale * M, 0, 1).
pub fn superimpose(a: &ImageTensor, m: &ImageTensor, scale: f32) -> Result<ImageTensor> {
    if a.dims() != m.dims() {
        return Err(Error::Dimension(format!(
            "superimpose shapes differ: {:?} vs {:?}",
            a.dims(),
            m.dims()
        )));
    }
    let mut out = a.clone();
    for (o, &mv) in out.data_mut().iter_mut().zip(m.data()) {
        if mv != 0.0 {
            *o = (*o + scale * mv).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Injection modes for the shape-based injectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectMode {
    /// per-voxel intensities U(0.3, 1.0) added inside the shape
    Random,
    /// a radial ramp a*(r/R), zero at the center and brightest at the surface
    Deform,
    /// the shape's own content copied from a shifted location
    CopyAltered,
}

impl InjectMode {
    pub fn name(self) -> &'static str {
        match self {
            InjectMode::Random => "sphere_random",
            InjectMode::Deform => "sphere_deform",
            InjectMode::CopyAltered => "sphere_copy",
        }
    }
}

/// Support shape of the injected outlier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectShape {
    Sphere,
    Cube,
}

fn shape_contains(shape: InjectShape, dz: f64, dy: f64, dx: f64, radius: f64) -> bool {
    match shape {
        InjectShape::Sphere => (dz * dz + dy * dy + dx * dx).sqrt() <= radius,
        InjectShape::Cube => dz.abs() <= radius && dy.abs() <= radius && dx.abs() <= radius,
    }
}

/// Inject at an explicit center and radius. Only voxels inside the brain mask
/// are modified, so the ground truth always lies within the brain.
pub fn inject_at(
    phantom: &Phantom,
    mode: InjectMode,
    shape: InjectShape,
    center: [usize; 3],
    radius: f64,
    rng: &mut RngStream,
) -> Result<AnomalyCase> {
    let dims = phantom.volume.dims().to_vec();
    let (d, h, w) = (dims[0], dims[1], dims[2]);
    let mut image = phantom.volume.clone();
    let mut gt = BinMask::zeros(&dims);

    // copy_altered parameters drawn up front: a random direction and a shift
    // of length in [R, 3R]
    let offset = if mode == InjectMode::CopyAltered {
        let len = rng.uniform(radius.max(1.0), 3.0 * radius.max(1.0));
        // random unit direction via normalized Gaussian triple
        let (mut gz, mut gy, mut gx) = (rng.normal(), rng.normal(), rng.normal());
        let norm = (gz * gz + gy * gy + gx * gx).sqrt().max(1e-9);
        gz /= norm;
        gy /= norm;
        gx /= norm;
        [
            (gz * len).round() as i64,
            (gy * len).round() as i64,
            (gx * len).round() as i64,
        ]
    } else {
        [0, 0, 0]
    };
    let ramp_amp = if mode == InjectMode::Deform {
        rng.uniform(0.4, 0.8)
    } else {
        0.0
    };

    let reach = radius.ceil() as i64;
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if !shape_contains(shape, dz as f64, dy as f64, dx as f64, radius) {
                    continue;
                }
                let z = center[0] as i64 + dz;
                let y = center[1] as i64 + dy;
                let x = center[2] as i64 + dx;
                if z < 0 || y < 0 || x < 0 || z >= d as i64 || y >= h as i64 || x >= w as i64 {
                    continue;
                }
                let coords = [z as usize, y as usize, x as usize];
                if phantom.brain_mask.get(&coords) == 0 {
                    continue;
                }
                let old = image.at(&coords);
                let new = match mode {
                    InjectMode::Random => {
                        (old + rng.uniform(0.3, 1.0) as f32).clamp(0.0, 1.0)
                    }
                    InjectMode::Deform => {
                        let r = ((dz * dz + dy * dy + dx * dx) as f64).sqrt();
                        (old + (ramp_amp * r / radius.max(1e-9)) as f32).clamp(0.0, 1.0)
                    }
                    InjectMode::CopyAltered => {
                        let sz = z + offset[0];
                        let sy = y + offset[1];
                        let sx = x + offset[2];
                        if sz >= 0
                            && sy >= 0
                            && sx >= 0
                            && sz < d as i64
                            && sy < h as i64
                            && sx < w as i64
                        {
                            phantom
                                .volume
                                .at(&[sz as usize, sy as usize, sx as usize])
                        } else {
                            old
                        }
                    }
                };
                if new != old {
                    image.set(&coords, new);
                    gt.set(&coords, 1);
                }
            }
        }
    }

    Ok(AnomalyCase {
        case_id: 0,
        image,
        gt_mask: gt,
        brain_mask: phantom.brain_mask.clone(),
        provenance: Provenance {
            kind: if shape == InjectShape::Cube {
                format!("cube_{}", &mode.name()[7..])
            } else {
                mode.name().to_string()
            },
            params: serde_json::json!({
                "center": center,
                "radius": radius,
                "canonical": false,
            }),
        },
    })
}

/// Place a shaped outlier at a random brain location with radius uniform in
/// [5%, 15%] of the smallest dimension. Retries placement up to 20 times if
/// the shape does not fit inside the volume.
pub fn inject_sphere(
    phantom: &Phantom,
    mode: InjectMode,
    shape: InjectShape,
    rng: &mut RngStream,
) -> Result<AnomalyCase> {
    let dims = phantom.volume.dims();
    let (d, h, w) = (dims[0], dims[1], dims[2]);
    let brain_voxels: Vec<usize> = phantom
        .brain_mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 1)
        .map(|(i, _)| i)
        .collect();
    if brain_voxels.is_empty() {
        return Err(Error::EmptyMask("no nonzero support".into()));
    }
    let min_dim = d.min(h).min(w) as f64;

    for _ in 0..20 {
        let radius = rng.uniform(0.05 * min_dim, 0.15 * min_dim).max(1.0);
        let idx = brain_voxels[rng.below(brain_voxels.len())];
        let z = idx / (h * w);
        let y = idx / w % h;
        let x = idx % w;
        let r = radius.ceil() as i64;
        let fits = z as i64 - r >= 0
            && y as i64 - r >= 0
            && x as i64 - r >= 0
            && z as i64 + r < d as i64
            && y as i64 + r < h as i64
            && x as i64 + r < w as i64;
        if fits {
            return inject_at(phantom, mode, shape, [z, y, x], radius, rng);
        }
    }
    Err(Error::DegenerateInput(
        "no fitting shape placement in 20 attempts".into(),
    ))
}

/// Superimposition injector: a sphere-supported anomaly extracted from a
/// donor volume, normalized, scaled, and added to the healthy image.
pub fn inject_superimpose(
    phantom: &Phantom,
    donor: &ImageTensor,
    scale: f32,
    rng: &mut RngStream,
) -> Result<AnomalyCase> {
    let dims = phantom.volume.dims().to_vec();
    let (d, h, w) = (dims[0], dims[1], dims[2]);
    let brain_voxels: Vec<usize> = phantom
        .brain_mask
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == 1)
        .map(|(i, _)| i)
        .collect();
    if brain_voxels.is_empty() {
        return Err(Error::EmptyMask("no nonzero support".into()));
    }
    let min_dim = d.min(h).min(w) as f64;

    for _ in 0..20 {
        let radius = rng.uniform(0.05 * min_dim, 0.15 * min_dim).max(1.0);
        let idx = brain_voxels[rng.below(brain_voxels.len())];
        let (z, y, x) = (idx / (h * w), idx / w % h, idx % w);
        let r = radius.ceil() as i64;
        let fits = z as i64 - r >= 0
            && y as i64 - r >= 0
            && x as i64 - r >= 0
            && z as i64 + r < d as i64
            && y as i64 + r < h as i64
            && x as i64 + r < w as i64;
        if !fits {
            continue;
        }
        // donor support mask: the sphere intersected with the brain
        let mut s = BinMask::zeros(&dims);
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if ((dz * dz + dy * dy + dx * dx) as f64).sqrt() > radius {
                        continue;
                    }
                    let coords = [
                        (z as i64 + dz) as usize,
                        (y as i64 + dy) as usize,
                        (x as i64 + dx) as usize,
                    ];
                    if phantom.brain_mask.get(&coords) == 1 {
                        s.set(&coords, 1);
                    }
                }
            }
        }
        if s.area() == 0 {
            continue;
        }
        let m = extract_anomaly(donor, &s)?;
        let image = superimpose(&phantom.volume, &m, scale)?;
        let mut gt = BinMask::zeros(&dims);
        for (g, &mv) in gt.data_mut().iter_mut().zip(m.data()) {
            *g = (mv != 0.0) as u8;
        }
        return Ok(AnomalyCase {
            case_id: 0,
            image,
            gt_mask: gt,
            brain_mask: phantom.brain_mask.clone(),
            provenance: Provenance {
                kind: "superimpose".to_string(),
                params: serde_json::json!({
                    "center": [z, y, x],
                    "radius": radius,
                    "scale": scale,
                }),
            },
        });
    }
    Err(Error::DegenerateInput(
        "no fitting superimposition placement in 20 attempts".into(),
    ))
}

/// Test-suite settings.
#[derive(Clone, Debug)]
pub struct SuiteCfg {
    pub phantom: PhantomCfg,
    pub n_healthy: usize,
    pub scale: f32,
    /// injector kinds assigned round-robin; subset of
    /// {superimpose, sphere_random, sphere_deform, sphere_copy}
    pub kinds: Vec<String>,
}

impl Default for SuiteCfg {
    fn default() -> Self {
        SuiteCfg {
            phantom: PhantomCfg::default(),
            n_healthy: 5,
            scale: 0.6,
            kinds: vec![
                "superimpose".into(),
                "sphere_random".into(),
                "sphere_deform".into(),
                "sphere_copy".into(),
            ],
        }
    }
}

/// Build `n_cases` anomalous cases (kinds assigned round-robin) followed by
/// `cfg.n_healthy` healthy cases with empty ground truth. Deterministic per
/// seed: each case derives its own child stream.
pub fn build_test_suite(
    n_cases: usize,
    cfg: &SuiteCfg,
    rng: &mut RngStream,
) -> Result<Vec<AnomalyCase>> {
    let mut cases = Vec::with_capacity(n_cases + cfg.n_healthy);
    for i in 0..n_cases {
        let mut crng = rng.child(&format!("case-{i}"));
        let phantom = make_phantom(&cfg.phantom, &mut crng)?;
        let kind = &cfg.kinds[i % cfg.kinds.len()];
        let mut case = match kind.as_str() {
            "superimpose" => {
                let donor = make_phantom(&cfg.phantom, &mut crng)?;
                inject_superimpose(&phantom, &donor.volume, cfg.scale, &mut crng)?
            }
            "sphere_random" => {
                inject_sphere(&phantom, InjectMode::Random, InjectShape::Sphere, &mut crng)?
            }
            "sphere_deform" => {
                inject_sphere(&phantom, InjectMode::Deform, InjectShape::Sphere, &mut crng)?
            }
            "sphere_copy" => inject_sphere(
                &phantom,
                InjectMode::CopyAltered,
                InjectShape::Sphere,
                &mut crng,
            )?,
            other => {
                return Err(Error::Config(format!("unknown injector kind '{other}'")));
            }
        };
        case.case_id = i;
        cases.push(case);
    }
    for j in 0..cfg.n_healthy {
        let mut crng = rng.child(&format!("healthy-{j}"));
        let phantom = make_phantom(&cfg.phantom, &mut crng)?;
        cases.push(AnomalyCase {
            case_id: n_cases + j,
            image: phantom.volume,
            gt_mask: BinMask::zeros(phantom.brain_mask.dims()),
            brain_mask: phantom.brain_mask,
            provenance: Provenance {
                kind: "healthy".to_string(),
                params: serde_json::json!({}),
            },
        });
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_cfg() -> PhantomCfg {
        PhantomCfg {
            jitter: false,
            noise: false,
            ..PhantomCfg::default()
        }
    }

    #[test]
    fn quiet_phantom_is_piecewise_constant() {
        let mut rng = RngStream::new(1);
        let p = make_phantom(&quiet_cfg(), &mut rng).unwrap();
        for (&v, &l) in p.volume.data().iter().zip(p.tissue_gt.labels()) {
            assert_eq!(v, TISSUE_INTENSITY[l as usize]);
        }
        // brain mask mirrors nonzero labels
        for (&b, &l) in p.brain_mask.data().iter().zip(p.tissue_gt.labels()) {
            assert_eq!(b == 1, l != 0);
        }
    }

    #[test]
    fn same_seed_same_phantom() {
        let cfg = PhantomCfg::default();
        let a = make_phantom(&cfg, &mut RngStream::new(9)).unwrap();
        let b = make_phantom(&cfg, &mut RngStream::new(9)).unwrap();
        assert_eq!(a.volume.data(), b.volume.data());
        assert_eq!(a.tissue_gt.labels(), b.tissue_gt.labels());
    }

    #[test]
    fn phantom_class_means_near_canonical() {
        let cfg = PhantomCfg::default();
        let mut rng = RngStream::new(10);
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        for _ in 0..100 {
            let p = make_phantom(&cfg, &mut rng).unwrap();
            for (&v, &l) in p.volume.data().iter().zip(p.tissue_gt.labels()) {
                sums[l as usize] += v as f64;
                counts[l as usize] += 1;
            }
        }
        for c in 0..4 {
            let mean = sums[c] / counts[c] as f64;
            assert!(
                (mean - TISSUE_INTENSITY[c] as f64).abs() < 0.05,
                "class {c}: mean {mean}"
            );
        }
    }

    #[test]
    fn phantom_rejects_small_dims() {
        let cfg = PhantomCfg {
            depth: 8,
            ..PhantomCfg::default()
        };
        assert!(make_phantom(&cfg, &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn phantom_values_in_unit_interval() {
        let p = make_phantom(&PhantomCfg::default(), &mut RngStream::new(11)).unwrap();
        assert!(p.volume.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn extract_single_region_normalizes_to_one() {
        let b = ImageTensor::filled(&[4, 4], 0.8);
        let mut s = BinMask::zeros(&[4, 4]);
        s.set(&[1, 1], 1);
        s.set(&[1, 2], 1);
        let m = extract_anomaly(&b, &s).unwrap();
        assert_eq!(m.at(&[1, 1]), 1.0);
        assert_eq!(m.at(&[1, 2]), 1.0);
        assert_eq!(m.data().iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn extract_constant_full_support() {
        let b = ImageTensor::filled(&[3, 3], 0.5);
        let s = BinMask::new(&[3, 3], vec![1; 9]).unwrap();
        let m = extract_anomaly(&b, &s).unwrap();
        // support is constant but nonzero: zero background acts as the lower
        // reference, so every value maps to exactly 1
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn extract_preserves_support() {
        let mut rng = RngStream::new(12);
        let data = (0..64).map(|_| rng.uniform(0.1, 1.0) as f32).collect();
        let b = ImageTensor::from_vec(&[8, 8], data).unwrap();
        let s_data: Vec<u8> = (0..64).map(|_| rng.coin(0.4) as u8).collect();
        let s = BinMask::new(&[8, 8], s_data).unwrap();
        let m = extract_anomaly(&b, &s).unwrap();
        for (&mv, &sv) in m.data().iter().zip(s.data()) {
            assert_eq!(mv != 0.0, sv == 1);
            assert!((0.0..=1.0).contains(&mv));
        }
        assert_eq!(m.max(), 1.0);
    }

    #[test]
    fn extract_rejects_empty_mask() {
        let b = ImageTensor::filled(&[4, 4], 0.5);
        let s = BinMask::zeros(&[4, 4]);
        assert!(matches!(extract_anomaly(&b, &s), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn superimpose_arithmetic_and_clamp() {
        let a = ImageTensor::filled(&[2, 2], 0.2);
        let mut m = ImageTensor::zeros(&[2, 2]);
        m.set(&[0, 0], 1.0);
        let out = superimpose(&a, &m, 0.6).unwrap();
        assert!((out.at(&[0, 0]) - 0.8).abs() < 1e-6);
        assert_eq!(out.at(&[0, 1]), 0.2);
        assert_eq!(out.at(&[1, 0]), 0.2);

        let hot = ImageTensor::filled(&[2, 2], 0.9);
        let ones = ImageTensor::filled(&[2, 2], 1.0);
        let clamped = superimpose(&hot, &ones, 0.6).unwrap();
        assert!(clamped.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn superimpose_identity_off_support() {
        let mut rng = RngStream::new(13);
        let data: Vec<f32> = (0..16).map(|_| rng.uniform(0.0, 1.0) as f32).collect();
        let a = ImageTensor::from_vec(&[4, 4], data).unwrap();
        let m = ImageTensor::zeros(&[4, 4]);
        let out = superimpose(&a, &m, 0.6).unwrap();
        assert_eq!(a.data(), out.data());
    }

    #[test]
    fn single_voxel_radius_marks_single_voxel() {
        let mut rng = RngStream::new(14);
        let p = make_phantom(&quiet_cfg(), &mut rng).unwrap();
        let center = [8usize, 32, 32];
        assert_eq!(p.brain_mask.get(&center), 1);
        let case = inject_at(
            &p,
            InjectMode::Random,
            InjectShape::Sphere,
            center,
            0.5,
            &mut rng,
        )
        .unwrap();
        assert_eq!(case.gt_mask.area(), 1);
        assert_eq!(case.gt_mask.get(&center), 1);
    }

    #[test]
    fn deform_adds_nothing_at_center() {
        let mut rng = RngStream::new(15);
        let p = make_phantom(&quiet_cfg(), &mut rng).unwrap();
        let center = [8usize, 32, 32];
        let case = inject_at(
            &p,
            InjectMode::Deform,
            InjectShape::Sphere,
            center,
            4.0,
            &mut rng,
        )
        .unwrap();
        // ramp is a*(r/R): exactly zero at r=0, so the center is unchanged
        assert_eq!(case.image.at(&center), p.volume.at(&center));
        assert_eq!(case.gt_mask.get(&center), 0);
    }

    #[test]
    fn random_mode_ground_truth_stays_in_brain() {
        let cfg = PhantomCfg::default();
        let mut rng = RngStream::new(16);
        for i in 0..50 {
            let p = make_phantom(&cfg, &mut rng).unwrap();
            let case =
                inject_sphere(&p, InjectMode::Random, InjectShape::Sphere, &mut rng).unwrap();
            for (j, (&g, &b)) in case
                .gt_mask
                .data()
                .iter()
                .zip(p.brain_mask.data())
                .enumerate()
            {
                if g == 1 {
                    assert_eq!(b, 1, "case {i} voxel {j} outside brain");
                }
            }
            assert!(case.gt_mask.area() > 0, "case {i} empty");
        }
    }

    #[test]
    fn cube_shape_marks_cubical_support() {
        let mut rng = RngStream::new(17);
        let p = make_phantom(&quiet_cfg(), &mut rng).unwrap();
        let case = inject_at(
            &p,
            InjectMode::Random,
            InjectShape::Cube,
            [32, 32, 32],
            2.0,
            &mut rng,
        )
        .unwrap();
        // a fully interior cube of half-side 2 covers 5^3 voxels
        assert_eq!(case.gt_mask.area(), 125);
        assert!(case.provenance.kind.starts_with("cube_"));
    }

    #[test]
    fn healthy_only_suite_has_empty_masks() {
        let cfg = SuiteCfg::default();
        let mut rng = RngStream::new(18);
        let cases = build_test_suite(0, &cfg, &mut rng).unwrap();
        assert_eq!(cases.len(), cfg.n_healthy);
        assert!(cases.iter().all(|c| c.gt_mask.area() == 0));
        assert!(cases.iter().all(|c| c.provenance.kind == "healthy"));
    }

    #[test]
    fn same_seed_same_suite() {
        let cfg = SuiteCfg::default();
        let a = build_test_suite(8, &cfg, &mut RngStream::new(19)).unwrap();
        let b = build_test_suite(8, &cfg, &mut RngStream::new(19)).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.image.data(), cb.image.data());
            assert_eq!(ca.gt_mask.data(), cb.gt_mask.data());
            assert_eq!(
                serde_json::to_string(&ca.provenance).unwrap(),
                serde_json::to_string(&cb.provenance).unwrap()
            );
        }
    }

    #[test]
    fn default_suite_covers_all_injectors() {
        let cfg = SuiteCfg::default();
        let cases = build_test_suite(20, &cfg, &mut RngStream::new(20)).unwrap();
        for kind in ["superimpose", "sphere_random", "sphere_deform", "sphere_copy"] {
            let n = cases.iter().filter(|c| c.provenance.kind == kind).count();
            assert_eq!(n, 5, "kind {kind}");
        }
        // anomalous cases differ from healthy exactly on the ground truth
        for c in cases.iter().take(20) {
            assert!(c.gt_mask.area() > 0);
        }
    }
}
