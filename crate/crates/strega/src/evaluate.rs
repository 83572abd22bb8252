//! Quantitative evaluation: Dice, AUPRC, paired t-test, distribution
//! summaries, and bounding-box localization.

use crate::error::{Error, Result};
use crate::mask::BinMask;
use crate::tensor::ImageTensor;
use serde::{Deserialize, Serialize};

/// Per-case evaluation result. Boxes are inclusive-exclusive coordinate
/// pairs: [y0,x0,y1,x1] in 2D, [z0,y0,x0,z1,y1,x1] in 3D.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case_id: usize,
    pub kind: String,
    pub dice: f64,
    pub auprc: Option<f64>,
    pub n_pred_components: usize,
    pub pred_area: usize,
    pub brain_area: usize,
    pub boxes_pred: Vec<Vec<usize>>,
    pub boxes_gt: Vec<Vec<usize>>,
}

/// Five-number summary plus mean and sample std.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

/// Sørensen–Dice coefficient 2|A∩B| / (|A|+|B|); both masks empty scores 1.0.
pub fn dice(pred: &BinMask, gt: &BinMask) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::Dimension(format!(
            "dice dims differ: {:?} vs {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let inter: usize = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(&p, &g)| p == 1 && g == 1)
        .count();
    let total = pred.area() + gt.area();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Area under the precision-recall curve: pixels ranked by descending score,
/// one PR point per distinct score (ties grouped), area by right-step
/// summation (precision at each recall increment).
pub fn auprc(scores: &ImageTensor, gt: &BinMask) -> Result<f64> {
    if scores.dims() != gt.dims() {
        return Err(Error::Dimension(format!(
            "auprc dims differ: {:?} vs {:?}",
            scores.dims(),
            gt.dims()
        )));
    }
    let positives = gt.area();
    if positives == 0 {
        return Err(Error::UndefinedMetric(
            "AUPRC needs at least one positive pixel".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores.data()[b]
            .partial_cmp(&scores.data()[a])
            .expect("scores must not contain NaN")
    });

    let mut area = 0.0f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        // group equal scores into one cut
        let mut j = i;
        while j < order.len() && scores.data()[order[j]] == scores.data()[order[i]] {
            if gt.data()[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / positives as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// Two-sided paired Student t-test on d = a − b. Returns (t, df, p) with
/// df = n−1 and p from the regularized incomplete beta function. Differences
/// that are identically zero give (0, df, 1); constant nonzero differences
/// are degenerate.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, usize, f64)> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateInput(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        if mean == 0.0 {
            return Ok((0.0, df, 1.0));
        }
        return Err(Error::DegenerateInput(
            "paired differences have zero variance".into(),
        ));
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let x = df as f64 / (df as f64 + t * t);
    let p = statrs::function::beta::beta_reg(df as f64 / 2.0, 0.5, x);
    Ok((t, df, p))
}

/// Mean, sample std (n−1 denominator; a single value has std 0), and the
/// five-number summary with linearly interpolated quartiles.
pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::DegenerateInput("summary of an empty list".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("summary values must not be NaN"));
    let quantile = |q: f64| -> f64 {
        let pos = q * (n - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < n {
            sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
        } else {
            sorted[n - 1]
        }
    };
    Ok(SummaryStats {
        mean,
        std,
        median: quantile(0.5),
        q1: quantile(0.25),
        q3: quantile(0.75),
        min: sorted[0],
        max: sorted[n - 1],
        n,
    })
}

/// One axis-aligned box per connected component: 4-connectivity in 2D,
/// 6-connectivity in 3D. Coordinates are [mins..., maxs...) per axis.
pub fn bounding_boxes(mask: &BinMask) -> Result<Vec<Vec<usize>>> {
    let dims = mask.dims().to_vec();
    if !(dims.len() == 2 || dims.len() == 3) {
        return Err(Error::Dimension(format!(
            "bounding_boxes expects rank 2 or 3, got {:?}",
            dims
        )));
    }
    let rank = dims.len();
    let strides: Vec<usize> = (0..rank)
        .map(|a| dims[a + 1..].iter().product())
        .collect();
    let total = mask.len();
    let mut seen = vec![false; total];
    let mut boxes = Vec::new();
    for start in 0..total {
        if mask.data()[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut lo = vec![usize::MAX; rank];
        let mut hi = vec![0usize; rank];
        while let Some(idx) = stack.pop() {
            let mut rem = idx;
            for a in 0..rank {
                let c = rem / strides[a];
                rem %= strides[a];
                lo[a] = lo[a].min(c);
                hi[a] = hi[a].max(c);
            }
            let mut rem = idx;
            let coords: Vec<usize> = (0..rank)
                .map(|a| {
                    let c = rem / strides[a];
                    rem %= strides[a];
                    c
                })
                .collect();
            for a in 0..rank {
                if coords[a] > 0 {
                    let nidx = idx - strides[a];
                    if !seen[nidx] && mask.data()[nidx] == 1 {
                        seen[nidx] = true;
                        stack.push(nidx);
                    }
                }
                if coords[a] + 1 < dims[a] {
                    let nidx = idx + strides[a];
                    if !seen[nidx] && mask.data()[nidx] == 1 {
                        seen[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        let mut boxv = lo;
        boxv.extend(hi.iter().map(|&h| h + 1));
        boxes.push(boxv);
    }
    boxes.sort();
    Ok(boxes)
}

/// Intersection-over-union of two axis-aligned boxes given as
/// [mins..., maxs...] with real coordinates.
pub fn bbox_iou(box_a: &[f64], box_b: &[f64]) -> Result<f64> {
    if box_a.len() != box_b.len() || box_a.len() % 2 != 0 || box_a.is_empty() {
        return Err(Error::Dimension(format!(
            "boxes must share an even positive length: {} vs {}",
            box_a.len(),
            box_b.len()
        )));
    }
    let k = box_a.len() / 2;
    let vol = |b: &[f64]| -> Result<f64> {
        let mut v = 1.0;
        for a in 0..k {
            let side = b[k + a] - b[a];
            if side <= 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "degenerate box: axis {a} has extent {side}"
                )));
            }
            v *= side;
        }
        Ok(v)
    };
    let va = vol(box_a)?;
    let vb = vol(box_b)?;
    let mut inter = 1.0;
    for a in 0..k {
        let lo = box_a[a].max(box_b[a]);
        let hi = box_a[k + a].min(box_b[k + a]);
        inter *= (hi - lo).max(0.0);
    }
    Ok(inter / (va + vb - inter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_mask(dims: &[usize], p: f64, seed: u64) -> BinMask {
        let mut rng = RngStream::new(seed);
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| rng.coin(p) as u8).collect();
        BinMask::new(dims, data).unwrap()
    }

    #[test]
    fn dice_basic_cases() {
        let m = random_mask(&[8, 8], 0.4, 1);
        assert_eq!(dice(&m, &m).unwrap(), 1.0);

        let mut a = BinMask::zeros(&[4, 4]);
        let mut b = BinMask::zeros(&[4, 4]);
        a.set(&[0, 0], 1);
        b.set(&[3, 3], 1);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);

        // |pred| = 4, |gt| = 4, overlap 2 -> 2*2/(4+4)
        let mut p = BinMask::zeros(&[4, 4]);
        for i in 0..4 {
            p.set(&[0, i], 1);
        }
        let g = BinMask::new(
            &[4, 4],
            (0..16)
                .map(|i| ((2..6).contains(&i)) as u8)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(dice(&p, &g).unwrap(), 0.5);

        let e = BinMask::zeros(&[4, 4]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn dice_symmetric_and_monotone() {
        let a = random_mask(&[10, 10], 0.5, 2);
        let b = random_mask(&[10, 10], 0.5, 3);
        assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());

        // removing overlap pixels one at a time never increases the score
        let gt = random_mask(&[10, 10], 0.5, 4);
        let mut pred = gt.clone();
        let mut prev = dice(&pred, &gt).unwrap();
        for i in 0..pred.len() {
            if pred.data()[i] == 1 {
                pred.data_mut()[i] = 0;
                let cur = dice(&pred, &gt).unwrap();
                assert!(cur <= prev + 1e-12);
                prev = cur;
            }
        }
    }

    #[test]
    fn auprc_perfect_ranking_is_one() {
        let gt = random_mask(&[6, 6], 0.3, 5);
        let scores = ImageTensor::from_vec(
            &[6, 6],
            gt.data().iter().map(|&g| g as f32).collect(),
        )
        .unwrap();
        assert!((auprc(&scores, &gt).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auprc_constant_scores_equal_prevalence() {
        let gt = random_mask(&[8, 8], 0.4, 6);
        let scores = ImageTensor::filled(&[8, 8], 0.5);
        let p = gt.area() as f64 / gt.len() as f64;
        assert!((auprc(&scores, &gt).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn auprc_requires_positives() {
        let gt = BinMask::zeros(&[4, 4]);
        let scores = ImageTensor::filled(&[4, 4], 0.5);
        assert!(matches!(
            auprc(&scores, &gt),
            Err(Error::UndefinedMetric(_))
        ));
    }

    /// all-thresholds brute force: reclassify the whole image at every
    /// distinct score value and integrate the right-step PR curve
    fn oracle_auprc(scores: &[f32], gt: &[u8]) -> f64 {
        let positives = gt.iter().filter(|&&g| g == 1).count() as f64;
        let mut cuts: Vec<f32> = scores.to_vec();
        cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
        cuts.dedup();
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for &t in &cuts {
            let mut tp = 0.0;
            let mut fp = 0.0;
            for (&s, &g) in scores.iter().zip(gt) {
                if s >= t {
                    if g == 1 {
                        tp += 1.0;
                    } else {
                        fp += 1.0;
                    }
                }
            }
            let precision = tp / (tp + fp);
            let recall = tp / positives;
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        area
    }

    #[test]
    fn auprc_matches_bruteforce_on_small_cases() {
        let mut rng = RngStream::new(7);
        for case in 0..50 {
            // small grids with deliberate score ties
            let n = 8;
            let gt_data: Vec<u8> = (0..n).map(|_| rng.coin(0.4) as u8).collect();
            if gt_data.iter().all(|&g| g == 0) {
                continue;
            }
            let scores_data: Vec<f32> =
                (0..n).map(|_| (rng.below(5) as f32) / 4.0).collect();
            let gt = BinMask::new(&[2, 4], gt_data.clone()).unwrap();
            let scores = ImageTensor::from_vec(&[2, 4], scores_data.clone()).unwrap();
            let got = auprc(&scores, &gt).unwrap();
            let want = oracle_auprc(&scores_data, &gt_data);
            assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
        }
    }

    #[test]
    fn t_test_equal_samples() {
        let a = [0.3, 0.5, 0.9, 0.1];
        let (t, df, p) = paired_t_test(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(df, 3);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn t_test_constant_nonzero_difference_is_degenerate() {
        let a = [2.0, 3.0, 4.0, 5.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            paired_t_test(&a, &b),
            Err(Error::DegenerateInput(_))
        ));
    }

    /// Lanczos log-gamma, used only to normalize the oracle's t density.
    fn ln_gamma(x: f64) -> f64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_93,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_13,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, &g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }

    /// two-sided p by Simpson integration of the Student-t density
    fn oracle_p(t: f64, df: usize) -> f64 {
        let v = df as f64;
        let log_c = ln_gamma((v + 1.0) / 2.0)
            - ln_gamma(v / 2.0)
            - 0.5 * (v * std::f64::consts::PI).ln();
        let pdf = |u: f64| (log_c - (v + 1.0) / 2.0 * (1.0 + u * u / v).ln()).exp();
        let hi = t.abs();
        let n = 40_000usize;
        let h = hi / n as f64;
        let mut s = pdf(0.0) + pdf(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        let central = s * h / 3.0;
        (1.0 - 2.0 * central).max(0.0)
    }

    #[test]
    fn t_test_matches_direct_formula_oracle() {
        let b = [0.0, 0.0, 0.0, 0.0];
        let a = [1.0, 2.0, 0.5, 1.5];
        let (t, df, p) = paired_t_test(&a, &b).unwrap();
        // direct formula: t = mean(d) / (sd(d)/sqrt(n))
        let mean = 1.25;
        let sd = ((0.0625 + 0.5625 + 0.5625 + 0.0625f64) / 3.0).sqrt();
        let t_direct = mean / (sd / 2.0);
        assert!((t - t_direct).abs() < 1e-12, "{t} vs {t_direct}");
        assert_eq!(df, 3);
        let p_oracle = oracle_p(t_direct, 3);
        assert!((p - p_oracle).abs() < 1e-6, "{p} vs {p_oracle}");
    }

    #[test]
    fn t_test_antisymmetric() {
        let mut rng = RngStream::new(8);
        let a: Vec<f64> = (0..12).map(|_| rng.uniform(0.0, 1.0)).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.uniform(0.0, 1.0)).collect();
        let (t_ab, _, p_ab) = paired_t_test(&a, &b).unwrap();
        let (t_ba, _, p_ba) = paired_t_test(&b, &a).unwrap();
        assert!((t_ab + t_ba).abs() < 1e-12);
        assert!((p_ab - p_ba).abs() < 1e-12);
    }

    #[test]
    fn summary_basic_cases() {
        let s = summary_stats(&[5.0]).unwrap();
        assert_eq!(
            (s.mean, s.std, s.median, s.q1, s.q3, s.min, s.max, s.n),
            (5.0, 0.0, 5.0, 5.0, 5.0, 5.0, 5.0, 1)
        );

        let s = summary_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
    }

    #[test]
    fn summary_matches_order_statistics_oracle() {
        let vals = [0.7, 0.6, 0.65, 0.72, 0.58];
        let s = summary_stats(&vals).unwrap();
        // sorted: .58 .6 .65 .7 .72; q1 at pos 1.0, q3 at pos 3.0
        assert!((s.q1 - 0.6).abs() < 1e-12);
        assert!((s.q3 - 0.7).abs() < 1e-12);
        assert!((s.median - 0.65).abs() < 1e-12);
    }

    #[test]
    fn summary_ordering_invariant_holds() {
        let mut rng = RngStream::new(9);
        for _ in 0..1000 {
            let n = rng.int_in(1, 20);
            let vals: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let s = summary_stats(&vals).unwrap();
            assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        }
    }

    #[test]
    fn boxes_basic_cases() {
        assert!(bounding_boxes(&BinMask::zeros(&[5, 5])).unwrap().is_empty());

        let mut m = BinMask::zeros(&[6, 6]);
        m.set(&[2, 3], 1);
        assert_eq!(bounding_boxes(&m).unwrap(), vec![vec![2, 3, 3, 4]]);
    }

    #[test]
    fn boxes_match_flood_fill_extents() {
        let mut m = BinMask::zeros(&[8, 8]);
        for y in 0..2 {
            for x in 0..3 {
                m.set(&[y, x], 1);
            }
        }
        for y in 5..8 {
            for x in 6..8 {
                m.set(&[y, x], 1);
            }
        }
        let boxes = bounding_boxes(&m).unwrap();
        assert_eq!(boxes, vec![vec![0, 0, 2, 3], vec![5, 6, 8, 8]]);
    }

    #[test]
    fn boxes_cover_and_are_minimal() {
        for seed in 0..100u64 {
            let m = random_mask(&[12, 12], 0.3, 100 + seed);
            let boxes = bounding_boxes(&m).unwrap();
            // coverage: every set pixel lies inside some box
            for y in 0..12 {
                for x in 0..12 {
                    if m.get(&[y, x]) == 1 {
                        assert!(
                            boxes
                                .iter()
                                .any(|b| y >= b[0] && y < b[2] && x >= b[1] && x < b[3]),
                            "seed {seed}: uncovered pixel ({y},{x})"
                        );
                    }
                }
            }
            // minimality: every face of every box touches a set pixel
            for b in &boxes {
                let (y0, x0, y1, x1) = (b[0], b[1], b[2], b[3]);
                assert!((x0..x1).any(|x| m.get(&[y0, x]) == 1), "seed {seed}");
                assert!((x0..x1).any(|x| m.get(&[y1 - 1, x]) == 1), "seed {seed}");
                assert!((y0..y1).any(|y| m.get(&[y, x0]) == 1), "seed {seed}");
                assert!((y0..y1).any(|y| m.get(&[y, x1 - 1]) == 1), "seed {seed}");
            }
        }
    }

    #[test]
    fn boxes_use_6_connectivity_in_3d() {
        let mut m = BinMask::zeros(&[3, 3, 3]);
        m.set(&[0, 0, 0], 1);
        m.set(&[1, 1, 1], 1); // diagonal: separate component under 6-conn
        let boxes = bounding_boxes(&m).unwrap();
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0], vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(boxes[1], vec![1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn iou_cases() {
        let a = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(bbox_iou(&a, &a).unwrap(), 1.0);
        let b = [5.0, 5.0, 6.0, 6.0];
        assert_eq!(bbox_iou(&a, &b).unwrap(), 0.0);
        // unit boxes overlapping half: |∩| = 0.5, |∪| = 1.5
        let c = [0.5, 0.0, 1.5, 1.0];
        assert!((bbox_iou(&a, &c).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        // degenerate box
        let d = [0.0, 0.0, 0.0, 1.0];
        assert!(bbox_iou(&a, &d).is_err());
    }
}
