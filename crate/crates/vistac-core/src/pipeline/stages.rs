//! The pipeline stages behind the CLI subcommands.

use super::artifacts::{
    load_hull, load_train_state, read_stage_meta, save_hull, save_train_state, write_stage_meta,
    StageMeta, ARTIFACT_VERSION,
};
use super::trainer::{init_scene_from_seeds, TrainState, Trainer};
use super::{PipelineConfig, RankerMode};
use crate::gaussian::{render, RenderOptions};
use crate::hull::{build_shell, carve, fit_grid, seed_points, DepthPriorFrame, HullShell};
use crate::img::dilate_n;
use crate::io::{
    export_gaussians_ply, export_points_ply, import_gaussians_ply, import_points_ply,
    load_manifest, pose_to_matrix, write_depth_png16, write_mask_png, write_normal_png16,
    write_rgb8, DatasetManifest, LoadedDataset, ManifestFrame, ManifestIntrinsics,
    ManifestTactile, PointCloud, MANIFEST_SCHEMA_VERSION,
};
use crate::math::{Vec2, Vec3};
use crate::metrics::{
    chamfer_mm, extract_surface, object_metric_mask, psnr, ssim, EvalReport,
};
use crate::optim::{insert_anchors, GradientAccumulator, SupervisionFrame};
use crate::oracle::{camera_rig, gt_point_cloud, labeled_cloud, render_oracle, OracleScene};
use crate::tactile::{
    calibrate, process_frame, render_tactile_rgb, BallPress, CalibrationModel, SensorSpec,
    TactileFrame,
};
use crate::touch::{
    plan_touches, CommonSenseRanker, MockRanker, PartLabeledCloud, PartRanking, RankQuery,
    RemoteRanker, TouchSelection,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Returned by `run-all`.
#[derive(Debug)]
pub struct RunSummary {
    pub report: EvalReport,
    pub report_path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct LabeledCloudFile {
    version: u32,
    points: Vec<[f64; 3]>,
    labels: Vec<String>,
}

/// Synthesizes a dataset from the oracle into `out` and returns the
/// manifest path.
pub fn stage_synth(cfg: &PipelineConfig, out: &Path) -> Result<PathBuf> {
    let spec = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| Error::StageInput("synth requires an oracle spec".into()))?;
    std::fs::create_dir_all(out)?;
    let scene = OracleScene::desk(spec.shape, spec.material)?;
    let size = spec.image_size;
    let focal = size as f64 * 1.1;
    let cams = camera_rig(scene.object_center, spec.views, 0.5, size, size, focal);

    let mut frames = Vec::new();
    for (i, cam) in cams.iter().enumerate() {
        let render = render_oracle(&scene, cam)?;
        let id = format!("view{i:02}");
        write_rgb8(&out.join(format!("{id}_color.png")), &render.color)?;
        write_depth_png16(
            &out.join(format!("{id}_depth.png")),
            &render.depth,
            &render.depth_valid,
        )?;
        write_normal_png16(
            &out.join(format!("{id}_normal.png")),
            &render.normal,
            &render.normal_valid,
        )?;
        write_mask_png(&out.join(format!("{id}_mask.png")), &render.mask)?;
        frames.push(ManifestFrame {
            id: id.clone(),
            color: format!("{id}_color.png").into(),
            depth: format!("{id}_depth.png").into(),
            normal: format!("{id}_normal.png").into(),
            mask: format!("{id}_mask.png").into(),
            pose: pose_to_matrix(&cam.pose),
        });
    }

    let gt = gt_point_cloud(&scene.object, spec.gt_samples, cfg.seed ^ 0x67740000);
    export_points_ply(&out.join("gt_cloud.ply"), &gt)?;
    let labeled = labeled_cloud(
        spec.shape,
        &scene.object,
        scene.object_center,
        scene.object_size,
        spec.labeled_samples,
        cfg.seed ^ 0x7ab30000,
    );
    let lc = LabeledCloudFile {
        version: 1,
        points: labeled.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        labels: labeled.labels,
    };
    std::fs::write(out.join("labeled_cloud.json"), serde_json::to_string(&lc)?)?;

    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        scene: spec.shape.class_hint().to_string(),
        units: "meters".into(),
        intrinsics: ManifestIntrinsics {
            fx: focal,
            fy: focal,
            cx: size as f64 / 2.0,
            cy: size as f64 / 2.0,
            width: size,
            height: size,
            near: 0.02,
            far: 20.0,
        },
        frames,
        tactile: vec![],
        labeled_cloud: Some("labeled_cloud.json".into()),
        gt_cloud: Some("gt_cloud.ply".into()),
    };
    let manifest_path = out.join("dataset.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    write_stage_meta(
        out,
        &StageMeta {
            stage: "synth".into(),
            version: ARTIFACT_VERSION,
            config_hash: cfg.hash(),
            iteration: 0,
            tau_g: 0.0,
            touches: 0,
        },
    )?;
    Ok(manifest_path)
}

fn load_dataset(cfg: &PipelineConfig, manifest_path: &Path) -> Result<LoadedDataset> {
    let _ = cfg;
    load_manifest(manifest_path)
}

/// Carves the hull, builds the shell, and generates seed clouds.
pub fn stage_carve(cfg: &PipelineConfig, manifest_path: &Path, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let dataset = load_dataset(cfg, manifest_path)?;
    let mut masks = dataset.silhouettes.clone();
    for m in &mut masks {
        m.mask = dilate_n(&m.mask, cfg.hull.mask_dilation_px);
    }
    let grid = fit_grid(&masks, cfg.hull.resolution)?;
    let hull = carve(&masks, &grid)?;
    log::info!(
        "hull: {} occupied voxels, {} components",
        hull.occupied_count(),
        hull.connected_components()
    );
    let shell = build_shell(&hull, cfg.hull.t_interior, cfg.hull.t_exterior)?;

    let prior_frames: Vec<DepthPriorFrame> = dataset
        .frames
        .iter()
        .map(|f| DepthPriorFrame {
            camera: f.camera.clone(),
            color: f.color.clone(),
            depth: f.depth.clone(),
            depth_valid: f.depth_valid.clone(),
        })
        .collect();
    let seeds = seed_points(&shell, &prior_frames, cfg.hull.tau_d, cfg.hull.max_background_seeds)?;
    log::info!(
        "seeds: {} object, {} background",
        seeds.object.len(),
        seeds.background.len()
    );

    save_hull(out, &hull)?;
    // Interop exports.
    let hull_pc = PointCloud::from_positions(
        hull.surface_voxels()
            .iter()
            .map(|&[i, j, k]| hull.spec.voxel_center(i, j, k))
            .collect(),
    );
    export_points_ply(&out.join("hull_surface.ply"), &hull_pc)?;
    export_points_ply(&out.join("seeds_object.ply"), &seeds.object)?;
    export_points_ply(&out.join("seeds_background.ply"), &seeds.background)?;
    write_stage_meta(
        out,
        &StageMeta {
            stage: "carve".into(),
            version: ARTIFACT_VERSION,
            config_hash: cfg.hash(),
            iteration: 0,
            tau_g: 0.0,
            touches: 0,
        },
    )?;
    Ok(())
}

fn load_shell(cfg: &PipelineConfig, carve_dir: &Path) -> Result<HullShell> {
    read_stage_meta(carve_dir, "carve")?;
    let hull = load_hull(carve_dir)?;
    build_shell(&hull, cfg.hull.t_interior, cfg.hull.t_exterior)
}

fn training_frames(cfg: &PipelineConfig, dataset: &LoadedDataset) -> Vec<SupervisionFrame> {
    match cfg.train_views {
        Some(k) if k > 0 && k < dataset.frames.len() => dataset.frames[..k].to_vec(),
        _ => dataset.frames.clone(),
    }
}

/// Global stage: trains from seed initialization up to the anchor-insert
/// pause and saves the scene, optimizer state, and gradient window.
pub fn stage_train(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    carve_dir: &Path,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let dataset = load_dataset(cfg, manifest_path)?;
    let shell = load_shell(cfg, carve_dir)?;
    let object = import_points_ply(&carve_dir.join("seeds_object.ply"))?;
    let background = import_points_ply(&carve_dir.join("seeds_background.ply"))?;
    let scene = init_scene_from_seeds(&object, &background);
    log::info!("initialized {} Gaussians from seeds", scene.len());

    let frames = training_frames(cfg, &dataset);
    if frames.is_empty() {
        return Err(Error::StageInput("no training frames".into()));
    }
    let mut trainer = Trainer::new(&cfg.train, &frames, &shell)?;
    trainer.log_interval = cfg.log_interval;
    trainer.metrics_log = Some(std::fs::File::create(out.join("metrics.jsonl"))?);
    let mut state = TrainState::fresh(scene);
    trainer.run_until(&mut state, cfg.train.anchor_insert_iteration)?;

    export_gaussians_ply(&out.join("scene.ply"), &state.scene)?;
    save_train_state(&out.join("state.bin"), &state.adam, &state.accum, &state.window_means)?;
    write_stage_meta(
        out,
        &StageMeta {
            stage: "train".into(),
            version: ARTIFACT_VERSION,
            config_hash: cfg.hash(),
            iteration: state.iteration,
            tau_g: state.tau_g_object,
            touches: 0,
        },
    )?;
    Ok(())
}

fn load_labeled_cloud(manifest_path: &Path, dataset: &LoadedDataset) -> Result<PartLabeledCloud> {
    let Some(rel) = &dataset.manifest.labeled_cloud else {
        return Ok(PartLabeledCloud::default());
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let path = if rel.is_absolute() { rel.clone() } else { base.join(rel) };
    let file: LabeledCloudFile = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    Ok(PartLabeledCloud {
        points: file.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
        labels: file.labels,
    })
}

/// Picks and orders the touch points from the paused global scene.
pub fn stage_select_touches(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    carve_dir: &Path,
    train_dir: &Path,
    out: &Path,
) -> Result<TouchSelection> {
    std::fs::create_dir_all(out)?;
    let meta = read_stage_meta(train_dir, "train")?;
    let dataset = load_dataset(cfg, manifest_path)?;
    let shell = load_shell(cfg, carve_dir)?;
    let scene = import_gaussians_ply(&train_dir.join("scene.ply"))?;
    let (_, _, window_means) = load_train_state(&train_dir.join("state.bin"))?;
    if window_means.len() != scene.len() {
        return Err(Error::StageInput("train state does not match the scene".into()));
    }
    let accum = GradientAccumulator {
        sum: window_means,
        count: vec![1; scene.len()],
    };
    let labeled = load_labeled_cloud(manifest_path, &dataset)?;
    let ranking = query_ranker(cfg, &dataset.manifest.scene);
    log::info!(
        "part ranking for '{}': {:?}",
        dataset.manifest.scene,
        ranking.parts
    );
    let selection = plan_touches(
        &scene,
        &accum,
        meta.tau_g,
        &shell,
        &labeled,
        &ranking,
        &cfg.touch.params,
    )?;
    std::fs::write(out.join("touches.json"), serde_json::to_string_pretty(&selection)?)?;
    write_stage_meta(
        out,
        &StageMeta {
            stage: "select-touches".into(),
            version: ARTIFACT_VERSION,
            config_hash: cfg.hash(),
            iteration: meta.iteration,
            tau_g: meta.tau_g,
            touches: selection.touches.len(),
        },
    )?;
    Ok(selection)
}

fn query_ranker(cfg: &PipelineConfig, class_hint: &str) -> PartRanking {
    let query = RankQuery { class_hint: class_hint.to_string(), image_png_b64: None };
    match cfg.touch.ranker {
        RankerMode::Mock => MockRanker::builtin().query(&query),
        RankerMode::Remote => match RemoteRanker::from_env() {
            Some(r) => r.query(&query),
            None => {
                log::warn!("VISTAC_RANKER_URL unset; degrading to geometric order");
                PartRanking::empty()
            }
        },
        RankerMode::None => PartRanking::empty(),
    }
}

#[derive(Serialize, Deserialize)]
struct TouchSimManifest {
    version: u32,
    calibration: PathBuf,
    frames: Vec<ManifestTactile>,
}

/// Simulates the planned touches with the oracle gel model; emits tactile
/// PNGs, poses, and the calibration file.
pub fn stage_touch_sim(
    cfg: &PipelineConfig,
    touches_dir: &Path,
    out: &Path,
) -> Result<usize> {
    std::fs::create_dir_all(out)?;
    read_stage_meta(touches_dir, "select-touches")?;
    let spec = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| Error::StageInput("touch-sim requires an oracle spec".into()))?;
    let selection: TouchSelection =
        serde_json::from_str(&std::fs::read_to_string(touches_dir.join("touches.json"))?)?;
    let scene = OracleScene::desk(spec.shape, spec.material)?;
    let sensor = SensorSpec::default();

    // Calibration from synthetic ball presses through the same forward
    // reflectance model the simulated sensor uses.
    let model = calibrate(&synthetic_ball_presses(&sensor))?;
    let calib_path = out.join("calibration.txt");
    model.save(&calib_path)?;

    let mut frames = Vec::new();
    for (i, touch) in selection.touches.iter().enumerate() {
        let p = Vec3::new(touch.position[0], touch.position[1], touch.position[2]);
        let n = Vec3::new(touch.normal[0], touch.normal[1], touch.normal[2]);
        // Drive toward the surface along -n, like the real approach move.
        let Some(hit) = scene.object_bvh.raycast(&scene.object, p + n * 0.05, -n, 0.0) else {
            log::warn!("touch {i}: approach ray missed the object; skipping");
            continue;
        };
        let surface_point = p + n * 0.05 - n * hit.t;
        let sim = crate::oracle::simulate_touch(
            &scene,
            surface_point,
            n,
            &sensor,
            cfg.touch.press_depth,
        )?;
        let id = format!("touch{i:02}");
        write_rgb8(&out.join(format!("{id}.png")), &sim.frame.rgb)?;
        frames.push(ManifestTactile {
            id,
            rgb: format!("touch{i:02}.png").into(),
            pose: pose_to_matrix(&sim.frame.pose),
            pixel_pitch: sensor.pixel_pitch,
        });
    }
    let count = frames.len();
    let sim_manifest = TouchSimManifest {
        version: 1,
        calibration: "calibration.txt".into(),
        frames,
    };
    std::fs::write(out.join("tactile.json"), serde_json::to_string_pretty(&sim_manifest)?)?;
    write_stage_meta(
        out,
        &StageMeta {
            stage: "touch-sim".into(),
            version: ARTIFACT_VERSION,
            config_hash: cfg.hash(),
            iteration: 0,
            tau_g: 0.0,
            touches: count,
        },
    )?;
    Ok(count)
}

fn synthetic_ball_presses(spec: &SensorSpec) -> Vec<BallPress> {
    use crate::tactile::GradientMap;
    let r_m = 0.004f64;
    let depth = 0.0005f64;
    let contact_r_m = (2.0 * r_m * depth - depth * depth).sqrt();
    (0..10)
        .map(|i| {
            let center = Vec2::new(
                80.0 + 40.0 * (i % 5) as f64,
                60.0 + 60.0 * (i / 5) as f64,
            );
            let mut gm = GradientMap::zeros(crate::tactile::TACTILE_W, crate::tactile::TACTILE_H);
            for row in 0..crate::tactile::TACTILE_H {
                for col in 0..crate::tactile::TACTILE_W {
                    let dx = (col as f64 + 0.5 - center.x) * spec.pixel_pitch;
                    let dy = (row as f64 + 0.5 - center.y) * spec.pixel_pitch;
                    let u2 = dx * dx + dy * dy;
                    if u2 < contact_r_m * contact_r_m {
                        let denom = (r_m * r_m - u2).sqrt();
                        gm.gx.set(row, col, -dx / denom);
                        gm.gy.set(row, col, -dy / denom);
                    }
                }
            }
            BallPress {
                frame: TactileFrame::new(
                    render_tactile_rgb(&gm),
                    crate::math::Iso3::identity(),
                    *spec,
                )
                .unwrap(),
                center_px: center,
                contact_radius_px: contact_r_m / spec.pixel_pitch,
                ball_radius_m: r_m,
            }
        })
        .collect()
}

/// Resumes from the pause, inserts anchors from tactile patches, and
/// trains to completion. `touch_dir` may be absent for the no-touch
/// baseline or when the dataset itself carries tactile frames (manual
/// capture mode; pass `calibration` alongside).
pub fn stage_refine(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    carve_dir: &Path,
    train_dir: &Path,
    touch_dir: Option<&Path>,
    manual_calibration: Option<&Path>,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let meta = read_stage_meta(train_dir, "train")?;
    let dataset = load_dataset(cfg, manifest_path)?;
    let shell = load_shell(cfg, carve_dir)?;
    let scene = import_gaussians_ply(&train_dir.join("scene.ply"))?;
    let (adam, accum, window_means) = load_train_state(&train_dir.join("state.bin"))?;
    let mut state = TrainState {
        scene,
        adam,
        accum,
        iteration: meta.iteration,
        tau_g_all: meta.tau_g,
        tau_g_object: meta.tau_g,
        window_means,
    };

    // Tactile inputs: simulated artifacts or manual frames from the
    // dataset manifest.
    let (tactile_frames, model): (Vec<TactileFrame>, Option<CalibrationModel>) = match touch_dir {
        Some(dir) => {
            read_stage_meta(dir, "touch-sim")?;
            let sim: TouchSimManifest =
                serde_json::from_str(&std::fs::read_to_string(dir.join("tactile.json"))?)?;
            let model = CalibrationModel::load(&dir.join(&sim.calibration))?;
            let mut frames = Vec::new();
            for mt in &sim.frames {
                let rgb = crate::io::read_rgb8(&dir.join(&mt.rgb))?;
                let pose = crate::io::pose_from_matrix(&mt.pose, &mt.id)?;
                frames.push(TactileFrame::new(
                    rgb,
                    pose,
                    SensorSpec { pixel_pitch: mt.pixel_pitch },
                )?);
            }
            (frames, Some(model))
        }
        None if !dataset.tactile.is_empty() => {
            let calib = manual_calibration.ok_or_else(|| {
                Error::StageInput(
                    "dataset has tactile frames; a calibration file is required".into(),
                )
            })?;
            (dataset.tactile.clone(), Some(CalibrationModel::load(calib)?))
        }
        None => (Vec::new(), None),
    };

    let mut touches = 0usize;
    if let Some(model) = model {
        let patches: Vec<crate::optim::AnchorSource> = tactile_frames
            .iter()
            .map(|f| {
                let patch = process_frame(f, &model, cfg.touch.contact_threshold);
                touches += 1;
                patch.to_anchor_source()
            })
            .collect();
        let added = insert_anchors(
            &mut state.scene,
            &mut state.accum,
            &mut state.adam,
            &patches,
            &cfg.train,
        );
        log::info!("inserted {added} anchor Gaussians from {touches} patches");
    }

    let frames = training_frames(cfg, &dataset);
    let mut trainer = Trainer::new(&cfg.train, &frames, &shell)?;
    trainer.log_interval = cfg.log_interval;
    trainer.metrics_log = Some(std::fs::File::create(out.join("metrics.jsonl"))?);
    trainer.run_until(&mut state, cfg.train.total_iterations)?;

    export_gaussians_ply(&out.join("scene.ply"), &state.scene)?;
    save_train_state(&out.join("state.bin"), &state.adam, &state.accum, &state.window_means)?;
    write_stage_meta(
        out,
        &StageMeta {
            stage: "refine".into(),
            version: ARTIFACT_VERSION,
            config_hash: cfg.hash(),
            iteration: state.iteration,
            tau_g: state.tau_g_object,
            touches,
        },
    )?;
    Ok(())
}

/// Renders the trained scene against evaluation views and writes the
/// report. `scene_dir` may be a refine or train artifact.
pub fn stage_eval(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    carve_dir: &Path,
    scene_dir: &Path,
    out: &Path,
) -> Result<EvalReport> {
    std::fs::create_dir_all(out)?;
    let meta = read_stage_meta(scene_dir, "refine")
        .or_else(|_| read_stage_meta(scene_dir, "train"))?;
    let dataset = load_dataset(cfg, manifest_path)?;
    let shell = load_shell(cfg, carve_dir)?;
    let scene = import_gaussians_ply(&scene_dir.join("scene.ply"))?;

    // Held-out views: an explicit trailing eval set wins; otherwise the
    // frames beyond the restricted training set; otherwise everything.
    let total = dataset.frames.len();
    let train_count = match cfg.train_views {
        Some(k) if k > 0 && k < total => k,
        _ => total,
    };
    let eval_frames: Vec<&SupervisionFrame> = match cfg.eval_views {
        Some(k) if k > 0 && k <= total => dataset.frames[total - k..].iter().collect(),
        _ if train_count < total => dataset.frames[train_count..].iter().collect(),
        _ => dataset.frames.iter().collect(),
    };
    let opts = RenderOptions::default();
    let mut psnr_per_view = Vec::new();
    let mut ssim_per_view = Vec::new();
    let mut psnr_object = Vec::new();
    let mut ssim_object = Vec::new();
    // Silhouettes pair with frames by index in the manifest.
    let offset = total - eval_frames.len();
    for (i, frame) in eval_frames.iter().enumerate() {
        let rendered = render(&scene, &frame.camera, &opts);
        psnr_per_view.push(psnr(&rendered.color, &frame.color, None)?);
        ssim_per_view.push(ssim(&rendered.color, &frame.color, None)?);
        let mask = object_metric_mask(&dataset.silhouettes[offset + i].mask);
        psnr_object.push(psnr(&rendered.color, &frame.color, Some(&mask))?);
        ssim_object.push(ssim(&rendered.color, &frame.color, Some(&mask))?);
    }

    let chamfer = match &dataset.manifest.gt_cloud {
        Some(rel) => {
            let base = manifest_path.parent().unwrap_or(Path::new("."));
            let path = if rel.is_absolute() { rel.clone() } else { base.join(rel) };
            let gt = import_points_ply(&path)?;
            let surface = extract_surface(&scene, cfg.eval.opacity_threshold, Some(&shell))?;
            Some(chamfer_mm(&surface.positions, &gt.positions)?)
        }
        None => None,
    };

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let report = EvalReport {
        scene: dataset.manifest.scene.clone(),
        views: train_count,
        touches: meta.touches,
        gaussians: scene.len(),
        psnr_mean: mean(&psnr_per_view),
        ssim_mean: mean(&ssim_per_view),
        psnr_object_mean: mean(&psnr_object),
        ssim_object_mean: mean(&ssim_object),
        psnr_per_view,
        ssim_per_view,
        psnr_object_per_view: psnr_object,
        ssim_object_per_view: ssim_object,
        chamfer_mm: chamfer,
        config_hash: cfg.hash(),
    };
    std::fs::write(out.join("report.json"), report.to_json())?;
    write_stage_meta(
        out,
        &StageMeta {
            stage: "eval".into(),
            version: ARTIFACT_VERSION,
            config_hash: cfg.hash(),
            iteration: meta.iteration,
            tau_g: meta.tau_g,
            touches: meta.touches,
        },
    )?;
    Ok(report)
}

/// The whole loop under one root directory: synth -> carve -> train ->
/// select-touches -> touch-sim -> refine -> eval. With `n_touches = 0`
/// the touch stages are skipped (baseline run).
pub fn run_all(cfg: &PipelineConfig, root: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(root)?;
    let manifest_path = match (&cfg.dataset, &cfg.oracle) {
        (Some(path), None) => path.clone(),
        (None, Some(_)) => stage_synth(cfg, &root.join("synth"))?,
        _ => unreachable!("validated"),
    };
    let carve_dir = root.join("carve");
    stage_carve(cfg, &manifest_path, &carve_dir)?;
    let train_dir = root.join("train");
    stage_train(cfg, &manifest_path, &carve_dir, &train_dir)?;

    let with_touches = cfg.touch.params.n_touches > 0 && cfg.oracle.is_some();
    let touch_dir = if with_touches {
        let select_dir = root.join("select-touches");
        stage_select_touches(cfg, &manifest_path, &carve_dir, &train_dir, &select_dir)?;
        let sim_dir = root.join("touch-sim");
        stage_touch_sim(cfg, &select_dir, &sim_dir)?;
        Some(sim_dir)
    } else {
        None
    };

    let refine_dir = root.join("refine");
    stage_refine(
        cfg,
        &manifest_path,
        &carve_dir,
        &train_dir,
        touch_dir.as_deref(),
        None,
        &refine_dir,
    )?;
    let eval_dir = root.join("eval");
    let report = stage_eval(cfg, &manifest_path, &carve_dir, &refine_dir, &eval_dir)?;
    Ok(RunSummary { report, report_path: eval_dir.join("report.json") })
}
