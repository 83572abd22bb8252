//! End-to-end orchestration: in-memory stage helpers plus the run-directory
//! layout used by the CLI (STF artifacts, JSONL metrics, manifests).

use crate::cevae::{anomaly_residual, train, LossWeights, MaskSpec, ModelParams, TrainConfig};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluate::{auprc, bounding_boxes, dice, summary_stats, EvalRecord};
use crate::io::{stf_read, stf_read_u8, stf_write, stf_write_u8};
use crate::mask::BinMask;
use crate::postprocess::{clamp_negatives, run_postprocess, PostprocConfig};
use crate::preprocess::{
    augment, resize_bilinear, seg_to_image, segment_tissues, zscore_normalize, AugmentSpec,
};
use crate::rng::RngStream;
use crate::synth::{build_test_suite, make_phantom, AnomalyCase, PhantomCfg, SuiteCfg};
use crate::tensor::{ImageTensor, Tensor};
use std::fs;
use std::path::Path;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

impl RunConfig {
    pub fn phantom_cfg(&self) -> PhantomCfg {
        PhantomCfg {
            depth: self.depth,
            height: self.side,
            width: self.side,
            jitter: true,
            noise: true,
        }
    }

    pub fn suite_cfg(&self) -> SuiteCfg {
        SuiteCfg {
            phantom: self.phantom_cfg(),
            n_healthy: self.n_healthy,
            scale: self.scale as f32,
            kinds: self.kinds_vec(),
        }
    }

    pub fn train_cfg(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            weights: LossWeights {
                kl: self.w_kl,
                vae: self.w_vae,
                ce: self.w_ce,
            },
            mask: MaskSpec::default(),
        }
    }

    pub fn augment_spec(&self) -> AugmentSpec {
        AugmentSpec {
            bias_field: self.augment_bias,
            gauss_noise: self.augment_noise,
            gamma: self.augment_gamma,
            ghosting: self.augment_ghosting,
            affine: self.augment_affine,
            rotation: self.augment_rotation,
            flips: self.augment_flips,
            ..AugmentSpec::default()
        }
    }

    pub fn postproc_cfg(&self, restore_h: usize, restore_w: usize) -> PostprocConfig {
        PostprocConfig {
            se_size: self.se_size,
            area_threshold: self.area_threshold * self.side * self.side / (64 * 64),
            restore_h,
            restore_w,
        }
    }
}

/// Segmentation-regularised model input for one volume: tissue segmentation,
/// label-to-intensity mapping, per-slice resize to the working side, then a
/// per-volume z-score. Output dims [D, side, side].
pub fn preprocess_volume(volume: &ImageTensor, cfg: &RunConfig) -> Result<ImageTensor> {
    let d = volume.dims().to_vec();
    if d.len() != 3 {
        return Err(Error::Dimension(format!(
            "preprocess_volume expects [D,H,W], got {:?}",
            d
        )));
    }
    let mut rng = RngStream::new(cfg.seed).child("segment");
    let seg = segment_tissues(volume, 4, cfg.icm_iters, cfg.icm_beta, &mut rng)?;
    let seg_img = seg_to_image(&seg);
    let (depth, h, w) = (d[0], d[1], d[2]);
    let side = cfg.side;
    let mut out = ImageTensor::zeros(&[depth, side, side]);
    let plane_in = h * w;
    for z in 0..depth {
        let slice = ImageTensor::from_vec(
            &[h, w],
            seg_img.data()[z * plane_in..(z + 1) * plane_in].to_vec(),
        )?;
        let resized = resize_bilinear(&slice, side, side)?;
        out.data_mut()[z * side * side..(z + 1) * side * side]
            .copy_from_slice(resized.data());
    }
    zscore_normalize(&out)
}

/// Build the anomaly-free training set: phantom volumes are segmented,
/// mapped, z-scored, and sliced; slices with less than 5% brain coverage are
/// skipped, and at most 4 evenly spaced slices are taken per volume so a
/// slice budget spans many distinct subject geometries rather than a few.
/// Optional augmentation runs per slice. Output dims [N, side, side].
pub fn build_training_set(cfg: &RunConfig, rng: &mut RngStream) -> Result<Tensor<f32>> {
    let side = cfg.side;
    let plane = side * side;
    let phantom_rng = rng.child("phantom");
    let mut augment_rng = rng.child("augment");
    let spec = cfg.augment_spec();
    let pcfg = cfg.phantom_cfg();

    let mut slices: Vec<f32> = Vec::with_capacity(cfg.train_slices * plane);
    let mut count = 0usize;
    let mut volume_idx = 0usize;
    while count < cfg.train_slices {
        if volume_idx > cfg.train_slices + 100 {
            return Err(Error::DegenerateInput(
                "phantom generator yielded too few usable slices".into(),
            ));
        }
        let mut vrng = phantom_rng.child(&format!("train-{volume_idx}"));
        volume_idx += 1;
        let phantom = make_phantom(&pcfg, &mut vrng)?;
        let pre = preprocess_volume(&phantom.volume, cfg)?;
        let vol_plane = phantom.brain_mask.dims()[1] * phantom.brain_mask.dims()[2];
        let usable: Vec<usize> = (0..pre.dims()[0])
            .filter(|&z| {
                let brain_area = phantom.brain_mask.data()[z * vol_plane..(z + 1) * vol_plane]
                    .iter()
                    .filter(|&&v| v == 1)
                    .count();
                brain_area as f64 >= 0.05 * vol_plane as f64
            })
            .collect();
        const MAX_PER_VOLUME: usize = 4;
        let take = usable.len().min(MAX_PER_VOLUME);
        for j in 0..take {
            if count >= cfg.train_slices {
                break;
            }
            // evenly spaced over the usable range
            let z = usable[j * usable.len() / take.max(1)];
            let slice = ImageTensor::from_vec(
                &[side, side],
                pre.data()[z * plane..(z + 1) * plane].to_vec(),
            )?;
            let slice = if cfg.augment {
                // spatial augmentations need the matching label slice
                let lab_full = segment_tissues(
                    &slice,
                    4,
                    0,
                    cfg.icm_beta,
                    &mut augment_rng,
                )
                .unwrap_or_else(|_| crate::mask::SegMask::zeros(&[side, side]));
                let (aug, _) = augment(&slice, &lab_full, &spec, &mut augment_rng)?;
                aug
            } else {
                slice
            };
            slices.extend_from_slice(slice.data());
            count += 1;
        }
    }
    Tensor::from_vec(&[count, side, side], slices)
}

/// Reconstruction residual of a preprocessed volume, slice-batched through
/// the model. Input and output dims [D, side, side].
pub fn infer_volume(pre: &ImageTensor, params: &ModelParams<f32>) -> Result<ImageTensor> {
    let d = pre.dims().to_vec();
    let (depth, side) = (d[0], d[1]);
    let batch = pre.clone().reshape(&[depth, 1, side, side])?;
    let residual = anomaly_residual(&batch, params)?;
    residual.reshape(&[depth, side, side])
}

/// Detection output for one case: the binary anomaly mask at the original
/// resolution and the clamped residual scores (bilinearly restored) used for
/// AUPRC.
pub fn detect(
    case_image: &ImageTensor,
    params: &ModelParams<f32>,
    cfg: &RunConfig,
) -> Result<(BinMask, ImageTensor)> {
    let d = case_image.dims().to_vec();
    let (depth, h, w) = (d[0], d[1], d[2]);
    let pre = preprocess_volume(case_image, cfg)?;
    let residual = infer_volume(&pre, params)?;
    let pred = run_postprocess(&residual, &cfg.postproc_cfg(h, w))?;

    let clamped = clamp_negatives(&residual);
    let side = cfg.side;
    let plane = side * side;
    let mut scores = ImageTensor::zeros(&[depth, h, w]);
    for z in 0..depth {
        let slice = ImageTensor::from_vec(
            &[side, side],
            clamped.data()[z * plane..(z + 1) * plane].to_vec(),
        )?;
        let restored = resize_bilinear(&slice, h, w)?;
        scores.data_mut()[z * h * w..(z + 1) * h * w].copy_from_slice(restored.data());
    }
    Ok((pred, scores))
}

/// Evaluate one case end to end.
pub fn evaluate_case(
    case: &AnomalyCase,
    params: &ModelParams<f32>,
    cfg: &RunConfig,
) -> Result<EvalRecord> {
    let (pred, scores) = detect(&case.image, params, cfg)?;
    eval_from_artifacts(case, &pred, &scores)
}

/// Metrics from already-computed prediction artifacts.
pub fn eval_from_artifacts(
    case: &AnomalyCase,
    pred: &BinMask,
    scores: &ImageTensor,
) -> Result<EvalRecord> {
    let dice_score = dice(pred, &case.gt_mask)?;
    let auprc_score = if case.gt_mask.area() > 0 {
        Some(auprc(scores, &case.gt_mask)?)
    } else {
        None
    };
    let boxes_pred = bounding_boxes(pred)?;
    let boxes_gt = bounding_boxes(&case.gt_mask)?;
    Ok(EvalRecord {
        case_id: case.case_id,
        kind: case.provenance.kind.clone(),
        dice: dice_score,
        auprc: auprc_score,
        n_pred_components: boxes_pred.len(),
        pred_area: pred.area(),
        brain_area: case.brain_mask.area(),
        boxes_pred,
        boxes_gt,
    })
}

/// Evaluate a whole suite.
pub fn evaluate_suite(
    cases: &[AnomalyCase],
    params: &ModelParams<f32>,
    cfg: &RunConfig,
) -> Result<Vec<EvalRecord>> {
    cases
        .iter()
        .map(|case| evaluate_case(case, params, cfg))
        .collect()
}

/// Aggregate per-case records into the report JSON: per-kind and overall
/// mean±std Dice, plus the healthy predicted-area fraction.
pub fn build_report(records: &[EvalRecord]) -> Result<serde_json::Value> {
    let mut kinds: Vec<String> = records.iter().map(|r| r.kind.clone()).collect();
    kinds.sort();
    kinds.dedup();

    let mut per_kind = serde_json::Map::new();
    for kind in &kinds {
        let subset: Vec<&EvalRecord> = records.iter().filter(|r| &r.kind == kind).collect();
        let dices: Vec<f64> = subset.iter().map(|r| r.dice).collect();
        let stats = summary_stats(&dices)?;
        let mut entry = serde_json::Map::new();
        entry.insert("n".into(), serde_json::json!(stats.n));
        entry.insert("dice_mean".into(), serde_json::json!(stats.mean));
        entry.insert("dice_std".into(), serde_json::json!(stats.std));
        entry.insert("dice_median".into(), serde_json::json!(stats.median));
        let auprcs: Vec<f64> = subset.iter().filter_map(|r| r.auprc).collect();
        if !auprcs.is_empty() {
            let astats = summary_stats(&auprcs)?;
            entry.insert("auprc_mean".into(), serde_json::json!(astats.mean));
        }
        if kind == "healthy" {
            let fracs: Vec<f64> = subset
                .iter()
                .map(|r| r.pred_area as f64 / r.brain_area.max(1) as f64)
                .collect();
            entry.insert(
                "pred_area_fraction_mean".into(),
                serde_json::json!(summary_stats(&fracs)?.mean),
            );
        }
        per_kind.insert(kind.clone(), serde_json::Value::Object(entry));
    }

    let anomalous: Vec<f64> = records
        .iter()
        .filter(|r| r.kind != "healthy")
        .map(|r| r.dice)
        .collect();
    let mut root = serde_json::Map::new();
    root.insert("n_cases".into(), serde_json::json!(records.len()));
    if !anomalous.is_empty() {
        let stats = summary_stats(&anomalous)?;
        root.insert("dice_mean".into(), serde_json::json!(stats.mean));
        root.insert("dice_std".into(), serde_json::json!(stats.std));
    }
    root.insert("per_kind".into(), serde_json::Value::Object(per_kind));
    Ok(serde_json::Value::Object(root))
}

// ---------------------------------------------------------------------------
// run-directory stages
// ---------------------------------------------------------------------------

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_config_snapshot(cfg: &RunConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let path = out.join("config.txt");
    fs::write(&path, cfg.snapshot()).map_err(io_err(&path))
}

/// `phantom` stage: write `n` phantom volumes and their label/brain masks.
pub fn stage_phantom(cfg: &RunConfig, out: &Path, n: usize) -> Result<()> {
    write_config_snapshot(cfg, out)?;
    let dir = out.join("phantoms");
    ensure_dir(&dir)?;
    let rng = RngStream::new(cfg.seed).child("phantom");
    let pcfg = cfg.phantom_cfg();
    let mut manifest = Vec::new();
    for i in 0..n {
        let mut prng = rng.child(&format!("held-out-{i}"));
        let p = make_phantom(&pcfg, &mut prng)?;
        let vol = format!("vol_{i}.stf");
        let tissue = format!("tissue_{i}.stf");
        let brain = format!("brain_{i}.stf");
        stf_write(&p.volume, dir.join(&vol))?;
        stf_write_u8(p.tissue_gt.dims(), p.tissue_gt.labels(), dir.join(&tissue))?;
        stf_write_u8(p.brain_mask.dims(), p.brain_mask.data(), dir.join(&brain))?;
        manifest.push(serde_json::json!({
            "index": i,
            "volume": vol,
            "tissue": tissue,
            "brain": brain,
        }));
    }
    let path = dir.join("manifest.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&serde_json::Value::Array(manifest))
            .expect("manifest serializes"),
    )
    .map_err(io_err(&path))
}

/// `inject` stage: build the synthetic anomaly suite.
pub fn stage_inject(cfg: &RunConfig, out: &Path) -> Result<()> {
    write_config_snapshot(cfg, out)?;
    let dir = out.join("suite");
    ensure_dir(&dir)?;
    let mut rng = RngStream::new(cfg.seed).child("inject");
    let cases = build_test_suite(cfg.n_cases, &cfg.suite_cfg(), &mut rng)?;
    let mut manifest = String::new();
    for case in &cases {
        let img = format!("case_{}_img.stf", case.case_id);
        let gt = format!("case_{}_gt.stf", case.case_id);
        let brain = format!("case_{}_brain.stf", case.case_id);
        stf_write(&case.image, dir.join(&img))?;
        stf_write_u8(case.gt_mask.dims(), case.gt_mask.data(), dir.join(&gt))?;
        stf_write_u8(case.brain_mask.dims(), case.brain_mask.data(), dir.join(&brain))?;
        let line = serde_json::json!({
            "case_id": case.case_id,
            "kind": case.provenance.kind,
            "seed": cfg.seed,
            "params": case.provenance.params,
            "image": img,
            "gt": gt,
            "brain": brain,
        });
        manifest.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
        manifest.push('\n');
    }
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest).map_err(io_err(&path))
}

/// `preprocess` stage: build and store the training dataset.
pub fn stage_preprocess(cfg: &RunConfig, out: &Path) -> Result<()> {
    write_config_snapshot(cfg, out)?;
    let dir = out.join("train");
    ensure_dir(&dir)?;
    let mut rng = RngStream::new(cfg.seed);
    let dataset = build_training_set(cfg, &mut rng)?;
    stf_write(&dataset, dir.join("dataset.stf"))
}

/// `train` stage: train on the stored dataset, write the checkpoint and the
/// per-epoch metrics stream.
pub fn stage_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    write_config_snapshot(cfg, out)?;
    let dataset = stf_read(out.join("train").join("dataset.stf"))?;
    let dir = out.join("ckpt");
    ensure_dir(&dir)?;
    let mut rng = RngStream::new(cfg.seed);
    let mut init_rng = rng.child("init");
    let mut params = ModelParams::<f32>::new(cfg.side, &mut init_rng)?;
    let metrics = train(&dataset, &mut params, &cfg.train_cfg(), &mut rng)?;

    let flat = Tensor::from_vec(&[params.n_params()], params.flatten())?;
    stf_write(&flat, dir.join("model.stf"))?;
    let state = Tensor::from_vec(&[params.n_state()], params.flatten_state())?;
    stf_write(&state, dir.join("state.stf"))?;
    let manifest = serde_json::json!({
        "input_side": cfg.side,
        "n_params": params.n_params(),
        "n_state": params.n_state(),
        "epochs": cfg.epochs,
        "seed": cfg.seed,
    });
    let path = dir.join("manifest.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&path))?;
    let mut lines = String::new();
    for m in &metrics {
        lines.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        lines.push('\n');
    }
    let path = dir.join("metrics.jsonl");
    fs::write(&path, lines).map_err(io_err(&path))
}

/// Load a checkpoint written by `stage_train`.
pub fn load_checkpoint(out: &Path) -> Result<ModelParams<f32>> {
    let dir = out.join("ckpt");
    let manifest_path = dir.join("manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?,
    )
    .map_err(|e| Error::Config(format!("checkpoint manifest: {e}")))?;
    let side = manifest["input_side"]
        .as_u64()
        .ok_or_else(|| Error::Config("checkpoint manifest missing input_side".into()))?
        as usize;
    let flat = stf_read(dir.join("model.stf"))?;
    let mut throwaway = RngStream::new(0);
    let mut params = ModelParams::<f32>::new(side, &mut throwaway)?;
    params.load_flat(flat.data())?;
    let state = stf_read(dir.join("state.stf"))?;
    params.load_state(state.data())?;
    Ok(params)
}

/// Load the suite written by `stage_inject`.
pub fn load_suite(out: &Path) -> Result<Vec<AnomalyCase>> {
    let dir = out.join("suite");
    let manifest_path = dir.join("manifest.jsonl");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let mut cases = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let entry: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::Config(format!("suite manifest: {e}")))?;
        let get = |k: &str| -> Result<&str> {
            entry[k]
                .as_str()
                .ok_or_else(|| Error::Config(format!("suite manifest missing '{k}'")))
        };
        let image = stf_read(dir.join(get("image")?))?;
        let (gt_dims, gt_data) = stf_read_u8(dir.join(get("gt")?))?;
        let (br_dims, br_data) = stf_read_u8(dir.join(get("brain")?))?;
        cases.push(AnomalyCase {
            case_id: entry["case_id"]
                .as_u64()
                .ok_or_else(|| Error::Config("suite manifest missing 'case_id'".into()))?
                as usize,
            image,
            gt_mask: BinMask::new(&gt_dims, gt_data)?,
            brain_mask: BinMask::new(&br_dims, br_data)?,
            provenance: crate::synth::Provenance {
                kind: get("kind")?.to_string(),
                params: entry["params"].clone(),
            },
        });
    }
    Ok(cases)
}

/// `infer` stage: run detection over the stored suite.
pub fn stage_infer(cfg: &RunConfig, out: &Path) -> Result<()> {
    let params = load_checkpoint(out)?;
    let cases = load_suite(out)?;
    let dir = out.join("pred");
    ensure_dir(&dir)?;
    for case in &cases {
        let (pred, scores) = detect(&case.image, &params, cfg)?;
        stf_write_u8(
            pred.dims(),
            pred.data(),
            dir.join(format!("case_{}_mask.stf", case.case_id)),
        )?;
        stf_write(
            &scores,
            dir.join(format!("case_{}_residual.stf", case.case_id)),
        )?;
    }
    Ok(())
}

/// `eval` stage: score stored predictions against the stored ground truth.
pub fn stage_eval(_cfg: &RunConfig, out: &Path) -> Result<()> {
    let cases = load_suite(out)?;
    let pred_dir = out.join("pred");
    let dir = out.join("eval");
    ensure_dir(&dir)?;
    let mut lines = String::new();
    for case in &cases {
        let (dims, data) = stf_read_u8(pred_dir.join(format!("case_{}_mask.stf", case.case_id)))?;
        let pred = BinMask::new(&dims, data)?;
        let scores = stf_read(pred_dir.join(format!("case_{}_residual.stf", case.case_id)))?;
        let record = eval_from_artifacts(case, &pred, &scores)?;
        lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
        lines.push('\n');
    }
    let path = dir.join("records.jsonl");
    fs::write(&path, lines).map_err(io_err(&path))
}

/// Load the eval records written by `stage_eval`.
pub fn load_records(out: &Path) -> Result<Vec<EvalRecord>> {
    let path = out.join("eval").join("records.jsonl");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Config(format!("eval records: {e}")))
        })
        .collect()
}

/// `report` stage: aggregate records into `report.json`; returns the rendered
/// report text.
pub fn stage_report(_cfg: &RunConfig, out: &Path) -> Result<String> {
    let records = load_records(out)?;
    let report = build_report(&records)?;
    let text =
        serde_json::to_string_pretty(&report).expect("report serializes");
    let path = out.join("report.json");
    fs::write(&path, &text).map_err(io_err(&path))?;
    Ok(text)
}
