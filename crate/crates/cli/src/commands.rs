use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use vfa::analysis::{detect_occupancy, detect_scene, measure_distortion, ObjectDistortion};
use vfa::decoding::{decode, load_jsonl, write_jsonl, Detection, DetectionRecord};
use vfa::encoding::{
    encode_targets, focal_loss, Annotation, FocalLossParams, GroundTruthObject, TargetMaps,
};
use vfa::geometry::Rig;
use vfa::metrics::{
    evaluate as evaluate_frames, match_frame, moda_modp, write_pr_csv, MetricsReport,
};
use vfa::scenegen::{
    export_scene, feature_file, generate_scene, render_feature_views, Scene, SceneConfig,
};
use vfa::tensor::{FeatureMap, GroundFeature, Tensor};
use vfa::voxel::{
    aggregate_features, build_projection_table, collapse_to_bev, homography_aggregate,
    ProjectionTable,
};

use crate::config::*;
use crate::error::{CliError, CliResult};
use crate::manifest::{Run, RunManifest};
use crate::ppm;

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Mean absolute value over channels, `[H][W]`.
fn channel_energy(g: &GroundFeature) -> Vec<f32> {
    let plane = g.height * g.width;
    let mut out = vec![0.0f32; plane];
    for c in 0..g.channels {
        for (o, v) in out.iter_mut().zip(g.channel(c)) {
            *o += v.abs() / g.channels as f32;
        }
    }
    out
}

pub fn scenegen(cfg: &ScenegenConfig, out: &Path) -> CliResult<RunManifest> {
    cfg.validate()?;
    let mut run = Run::start("scenegen", out)?;
    let scene = generate_scene(&cfg.scene)?;
    let maps = if cfg.render {
        Some(render_feature_views(&scene, cfg.channels, cfg.stride)?)
    } else {
        None
    };
    let written = export_scene(&scene, out, maps.as_deref())?;
    for p in std::iter::once(&written.calibration)
        .chain(std::iter::once(&written.annotation))
        .chain(&written.features)
    {
        run.output(&file_name(p));
    }
    run.summary("objects", scene.objects.len())?;
    run.summary("cameras", scene.cameras.len())?;
    run.finish(cfg)
}

pub fn project(cfg: &ProjectConfig, calibration: &Path, out: &Path) -> CliResult<RunManifest> {
    let mut run = Run::start("project", out)?;
    run.input(calibration)?;
    let rig = Rig::load(calibration)?;
    let table = build_projection_table(&cfg.grid, &rig.cameras, cfg.stride)?;
    table.save(run.output("table.bin"))?;
    let valid: Vec<usize> = (0..table.camera_count())
        .map(|c| table.valid_count(c))
        .collect();
    run.summary("valid_voxels", valid)?;
    run.finish(cfg)
}

fn load_views(run: &mut Run, rig: &Rig, features: &Path) -> CliResult<Vec<FeatureMap>> {
    rig.cameras
        .iter()
        .map(|cam| {
            let p = features.join(feature_file(cam.id));
            run.input(&p)?;
            Ok(FeatureMap::from_tensor(Tensor::load(&p)?)?)
        })
        .collect()
}

pub fn aggregate(
    cfg: &AggregateConfig,
    calibration: &Path,
    features: &Path,
    table: Option<&Path>,
    out: &Path,
) -> CliResult<RunManifest> {
    let mut cfg = cfg.clone();
    let mut run = Run::start("aggregate", out)?;
    run.input(calibration)?;
    let rig = Rig::load(calibration)?;
    let maps = load_views(&mut run, &rig, features)?;
    let ground = match cfg.method {
        AggregationMethod::Vfa => {
            let table = match table {
                Some(p) => {
                    run.input(p)?;
                    let t = ProjectionTable::load(p)?;
                    cfg.grid = *t.grid();
                    cfg.stride = t.stride();
                    t
                }
                None => build_projection_table(&cfg.grid, &rig.cameras, cfg.stride)?,
            };
            if table.camera_count() != rig.cameras.len() {
                return Err(CliError::Validation(format!(
                    "projection table covers {} cameras, calibration has {}",
                    table.camera_count(),
                    rig.cameras.len()
                )));
            }
            collapse_to_bev(&aggregate_features(&table, &maps)?, cfg.collapse)?
        }
        AggregationMethod::Homography => {
            if cfg.heights.is_empty() {
                return Err(CliError::Validation(
                    "homography needs at least one plane height".into(),
                ));
            }
            homography_aggregate(&rig.cameras, &maps, &cfg.heights, &cfg.grid, cfg.stride)?
        }
    };
    ground.to_tensor().save(run.output("ground.tensor"))?;
    ppm::heatmap(&channel_energy(&ground), ground.width, ground.height)
        .save(&run.output("ground.ppm"))?;
    run.summary("shape", [ground.channels, ground.height, ground.width])?;
    run.finish(&cfg)
}

pub fn encode(cfg: &EncodeConfig, annotation: &Path, out: &Path) -> CliResult<RunManifest> {
    let mut run = Run::start("encode", out)?;
    run.input(annotation)?;
    let ann = Annotation::load(annotation)?;
    let maps = encode_targets(
        &ann.objects,
        &cfg.grid,
        &mean_dims(cfg.mean_dims)?,
        &cfg.encoding,
    )?;
    maps.to_tensor().save(run.output("targets.tensor"))?;
    ppm::heatmap(&maps.confidence, maps.width, maps.height).save(&run.output("confidence.ppm"))?;
    run.summary("frame", ann.frame)?;
    run.summary("objects", ann.objects.len())?;
    run.finish(cfg)
}

pub fn decode_targets(cfg: &DecodeConfig, targets: &Path, out: &Path) -> CliResult<RunManifest> {
    let mut run = Run::start("decode", out)?;
    run.input(targets)?;
    let maps = TargetMaps::from_tensor(Tensor::load(targets)?)?;
    let dets = decode(
        &maps,
        &cfg.grid,
        &mean_dims(cfg.mean_dims)?,
        cfg.gamma,
        &cfg.decoder,
    )?;
    let records: Vec<DetectionRecord> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| DetectionRecord::new(cfg.frame, i as i64, d))
        .collect();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records)?;
    run.write("detections.jsonl", &buf)?;
    run.summary("detections", records.len())?;
    run.finish(cfg)
}

/// Reads one annotation document or an array of them.
pub fn load_annotations(path: &Path) -> CliResult<Vec<Annotation>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)?;
    let anns: Vec<Annotation> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    for a in &anns {
        for o in &a.objects {
            o.validate()?;
        }
    }
    Ok(anns)
}

/// Frame ids with the detections and ground truth of each.
pub type AlignedFrames = (Vec<u64>, Vec<Vec<Detection>>, Vec<Vec<GroundTruthObject>>);

/// Aligns detections and annotations on the union of their frame ids.
pub fn align_frames(records: &[DetectionRecord], anns: &[Annotation]) -> CliResult<AlignedFrames> {
    let mut gts: BTreeMap<u64, Vec<GroundTruthObject>> = BTreeMap::new();
    for a in anns {
        if gts.insert(a.frame, a.objects.clone()).is_some() {
            return Err(CliError::Validation(format!(
                "frame {} is annotated twice",
                a.frame
            )));
        }
    }
    let frames: Vec<u64> = gts
        .keys()
        .copied()
        .chain(records.iter().map(|r| r.frame))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<u64, usize> = frames.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    let mut dets = vec![Vec::new(); frames.len()];
    for r in records {
        dets[index[&r.frame]].push(r.detection());
    }
    let gts = frames
        .iter()
        .map(|f| gts.remove(f).unwrap_or_default())
        .collect();
    Ok((frames, dets, gts))
}

fn metrics_artifacts(run: &mut Run, report: &MetricsReport) -> CliResult<()> {
    run.write_json("metrics.json", report)?;
    let mut csv = Vec::new();
    write_pr_csv(&mut csv, report)?;
    run.write("pr.csv", &csv)?;
    run.summary("moda", report.moda)?;
    run.summary("modp", report.modp)
}

pub fn evaluate(
    cfg: &EvaluateConfig,
    detections: &Path,
    annotations: &Path,
    out: &Path,
) -> CliResult<RunManifest> {
    let mut run = Run::start("evaluate", out)?;
    run.input(detections)?;
    run.input(annotations)?;
    let records = load_jsonl(detections)?;
    let anns = load_annotations(annotations)?;
    let (frames, dets, gts) = align_frames(&records, &anns)?;
    let report = evaluate_frames(&dets, &gts, &cfg.matching)?;
    metrics_artifacts(&mut run, &report)?;
    run.summary("frames", frames.len())?;
    run.finish(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSummary {
    /// Objects seen in at least two oblique views.
    pub eligible: usize,
    /// Eligible objects with `vfa < multi < single` spread.
    pub ordered: usize,
    pub objects: Vec<ObjectDistortion>,
}

pub fn demo_distortion(cfg: &DistortionDemoConfig, out: &Path) -> CliResult<RunManifest> {
    let mut run = Run::start("demo-distortion", out)?;
    let scene = generate_scene(&cfg.scene)?;
    let grid = cfg.scene.grid();
    let report = measure_distortion(&scene, &grid, &cfg.distortion)?;
    let written = export_scene(&scene, out, None)?;
    run.output(&file_name(&written.calibration));
    run.output(&file_name(&written.annotation));
    let (ordered, eligible) = report.ordering_counts();
    run.write_json(
        "report.json",
        &DistortionSummary {
            eligible,
            ordered,
            objects: report.objects.clone(),
        },
    )?;
    if let Some(maps) = &report.heatmaps {
        for (name, m) in ["bev_single.ppm", "bev_multi.ppm", "bev_vfa.ppm"]
            .into_iter()
            .zip(maps)
        {
            ppm::heatmap(m, grid.nx, grid.ny).save(&run.output(name))?;
        }
    }
    run.summary("eligible", eligible)?;
    run.summary("ordered", ordered)?;
    run.finish(cfg)
}

fn frame_scene(base: &SceneConfig, f: usize) -> CliResult<Scene> {
    Ok(generate_scene(&SceneConfig {
        seed: base.seed + f as u64,
        frame: base.frame + f as u64,
        ..base.clone()
    })?)
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub moda: f64,
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Valid (voxel, camera) pairs pooled per frame.
    pub voxel_views: usize,
    /// Median wall time per frame of aggregation plus detection (seconds).
    #[serde(skip)]
    pub seconds_per_frame: f64,
}

/// Runs the aggregate→detect→evaluate loop for every swept value. Scenes
/// and rendered views are shared across values; projection tables are built
/// once per value and frame, outside the timed region.
pub fn run_sweep(cfg: &SweepConfig) -> CliResult<Vec<SweepRow>> {
    cfg.validate()?;
    let frames: Vec<(Scene, Vec<FeatureMap>)> = (0..cfg.frames)
        .into_par_iter()
        .map(|f| {
            let scene = frame_scene(&cfg.scene, f)?;
            let maps = render_feature_views(&scene, cfg.channels, cfg.stride)?;
            Ok((scene, maps))
        })
        .collect::<CliResult<_>>()?;
    let mean = cfg.scene.mean_dims();
    let mut rows = Vec::new();
    for &value in &cfg.values {
        let grid = cfg.grid(value)?;
        let (mut matchings, mut times, mut work) = (Vec::new(), Vec::new(), 0usize);
        for (scene, maps) in &frames {
            let table = build_projection_table(&grid, &scene.cameras, cfg.stride)?;
            work = (0..table.camera_count())
                .map(|c| table.valid_count(c))
                .sum();
            let t0 = Instant::now();
            let vox = aggregate_features(&table, maps)?;
            let found = detect_occupancy(&table, &vox, &mean, &cfg.occupancy)?;
            times.push(t0.elapsed().as_secs_f64());
            matchings.push(match_frame(
                &found.detections,
                &scene.objects,
                cfg.distance_threshold,
            ));
        }
        let m = moda_modp(&matchings, cfg.distance_threshold)?;
        times.sort_by(f64::total_cmp);
        rows.push(SweepRow {
            value,
            moda: m.moda,
            modp: m.modp,
            precision: m.precision,
            recall: m.recall,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            voxel_views: work,
            seconds_per_frame: times[times.len() / 2],
        });
    }
    Ok(rows)
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let name = match param {
        SweepParam::NLayers => "n_layers",
        SweepParam::VoxelHeight => "voxel_height",
    };
    let mut s = String::from("param,value,moda,modp,precision,recall,tp,fp,fn,voxel_views\n");
    for r in rows {
        s.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{},{}\n",
            r.value, r.moda, r.modp, r.precision, r.recall, r.tp, r.fp, r.fn_, r.voxel_views
        ));
    }
    s
}

pub fn sweep(cfg: &SweepConfig, out: &Path) -> CliResult<(Vec<SweepRow>, RunManifest)> {
    let mut run = Run::start("sweep", out)?;
    let rows = run_sweep(cfg)?;
    run.write("sweep.csv", sweep_csv(cfg.param, &rows).as_bytes())?;
    let series = vec![
        rows.iter().map(|r| r.moda).collect(),
        rows.iter().map(|r| r.modp).collect(),
    ];
    ppm::line_plot(&series, 320, 200).save(&run.output("sweep.ppm"))?;
    run.summary("moda", rows.iter().map(|r| r.moda).collect::<Vec<_>>())?;
    run.timing(
        "seconds_per_frame",
        rows.iter().map(|r| r.seconds_per_frame).collect::<Vec<_>>(),
    )?;
    let manifest = run.finish(cfg)?;
    Ok((rows, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub frames: usize,
    /// Mean focal loss of the detector's confidence map against the encoded
    /// ground-truth heatmap.
    pub focal_loss: f64,
    pub metrics: MetricsReport,
}

/// Scene → rendered views → voxel aggregation → detections → metrics.
pub fn run_pipeline(cfg: &PipelineConfig) -> CliResult<(PipelineReport, Vec<DetectionRecord>)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mean = cfg.scene.mean_dims();
    let frames: Vec<(Scene, Vec<Detection>, f64)> = (0..cfg.frames)
        .into_par_iter()
        .map(|f| {
            let scene = frame_scene(&cfg.scene, f)?;
            let maps = render_feature_views(&scene, cfg.channels, cfg.stride)?;
            let found = detect_scene(&scene, &grid, &maps, cfg.stride, &mean, &cfg.occupancy)?;
            let target = encode_targets(&scene.objects, &grid, &mean, &cfg.encoding)?;
            let loss = focal_loss(
                &found.confidence,
                &target.confidence,
                &FocalLossParams::default(),
            )?;
            Ok((scene, found.detections, loss))
        })
        .collect::<CliResult<_>>()?;
    let dets: Vec<Vec<Detection>> = frames.iter().map(|f| f.1.clone()).collect();
    let gts: Vec<Vec<GroundTruthObject>> = frames.iter().map(|f| f.0.objects.clone()).collect();
    let metrics = evaluate_frames(&dets, &gts, &cfg.matching)?;
    let records = frames
        .iter()
        .flat_map(|(scene, d, _)| {
            d.iter()
                .enumerate()
                .map(move |(i, det)| DetectionRecord::new(scene.frame, i as i64, det))
        })
        .collect();
    let report = PipelineReport {
        frames: frames.len(),
        focal_loss: frames.iter().map(|f| f.2).sum::<f64>() / frames.len() as f64,
        metrics,
    };
    Ok((report, records))
}

pub fn pipeline(cfg: &PipelineConfig, out: &Path) -> CliResult<(PipelineReport, RunManifest)> {
    let mut run = Run::start("pipeline", out)?;
    let (report, records) = run_pipeline(cfg)?;
    run.write_json("report.json", &report)?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records)?;
    run.write("detections.jsonl", &buf)?;
    let mut csv = Vec::new();
    write_pr_csv(&mut csv, &report.metrics)?;
    run.write("pr.csv", &csv)?;
    run.summary("moda", report.metrics.moda)?;
    run.summary("focal_loss", report.focal_loss)?;
    let manifest = run.finish(cfg)?;
    Ok((report, manifest))
}
