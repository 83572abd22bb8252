//! Temporary diagnostic: post-processing survivors on healthy vs anomalous
//! cases — component sizes after Otsu, after opening, after area filter.
use strega::config::RunConfig;
use strega::mask::BinMask;
use strega::pipeline::{infer_volume, load_checkpoint, load_suite, preprocess_volume};
use strega::postprocess::{area_filter, clamp_negatives, morph_open, otsu_threshold};
use strega::tensor::ImageTensor;

fn comp_sizes(m: &BinMask) -> Vec<usize> {
    // 4-connected flood fill census
    let d = m.dims();
    let (h, w) = (d[0], d[1]);
    let mut seen = vec![false; h * w];
    let mut sizes = Vec::new();
    for start in 0..h * w {
        if m.data()[start] == 0 || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut n = 0;
        while let Some(i) = stack.pop() {
            n += 1;
            let (y, x) = (i / w, i % w);
            for (ny, nx) in [
                (y.wrapping_sub(1), x),
                (y + 1, x),
                (y, x.wrapping_sub(1)),
                (y, x + 1),
            ] {
                if ny < h && nx < w {
                    let j = ny * w + nx;
                    if m.data()[j] == 1 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(n);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

fn main() -> strega::Result<()> {
    let out = std::path::Path::new("/tmp/e2e");
    let cfg = RunConfig::default();
    let params = load_checkpoint(out)?;
    let cases = load_suite(out)?;
    for case in [&cases[9], &cases[20]] {
        println!("== case {} {} ==", case.case_id, case.provenance.kind);
        let pre = preprocess_volume(&case.image, &cfg)?;
        let residual = infer_volume(&pre, &params)?;
        let clamped = clamp_negatives(&residual);
        let side = cfg.side;
        let plane = side * side;
        for z in [16usize, 24, 32, 40] {
            let slice = ImageTensor::from_vec(
                &[side, side],
                clamped.data()[z * plane..(z + 1) * plane].to_vec(),
            )?;
            let (thr, mask) = otsu_threshold(&slice);
            let opened = morph_open(&mask, cfg.se_size)?;
            let kept = area_filter(&opened, cfg.area_threshold)?;
            let gt_area: usize = (z * plane..(z + 1) * plane)
                .filter(|&i| case.gt_mask.data()[i] == 1)
                .count();
            println!(
                "z {z:2} thr {thr:.3} gt {gt_area:4} otsu {:?} open {:?} kept {:?}",
                &comp_sizes(&mask)[..comp_sizes(&mask).len().min(6)],
                comp_sizes(&opened),
                comp_sizes(&kept)
            );
        }
    }
    Ok(())
}
