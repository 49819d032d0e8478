//! Command-line front end of the `vfa` pipeline.
//!
//! Every command writes its artifacts and a `manifest.json` into `--out`.
//! Settings come from the command's defaults, replaced by `--config FILE`
//! when given, then overridden by explicit flags.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod ppm;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vfa::encoding::ConfidenceMode;
use vfa::metrics::ApInterpolation;
use vfa::voxel::CollapseMode;

use crate::config::*;
pub use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "vfa",
    version,
    about = "Voxelized multiview feature aggregation"
)]
pub struct Cli {
    /// JSON file replacing the command's defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SceneFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub objects: Option<usize>,
    #[arg(long)]
    pub cameras: Option<usize>,
    /// Pen size `X` or `X,Y` in meters.
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    pub extent: Option<Vec<f64>>,
}

impl SceneFlags {
    fn apply(&self, s: &mut vfa::scenegen::SceneConfig) {
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.objects {
            s.n_objects = v;
        }
        if let Some(v) = self.cameras {
            s.n_cameras = v;
        }
        if let Some(e) = &self.extent {
            s.extent = [e[0], *e.get(1).unwrap_or(&e[0])];
        }
    }
}

#[derive(Debug, Args)]
pub struct GridFlags {
    /// Number of voxel layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Total grid height in meters.
    #[arg(long)]
    pub grid_height: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic scene and render its feature views.
    Scenegen {
        #[command(flatten)]
        scene: SceneFlags,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        stride: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the voxel projection table for a calibration.
    Project {
        #[arg(long)]
        calibration: PathBuf,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        stride: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate per-view feature tensors onto the ground grid.
    Aggregate {
        #[arg(long)]
        calibration: PathBuf,
        /// Directory holding `view_<id>.tensor` files.
        #[arg(long)]
        features: PathBuf,
        /// Precomputed projection table (VFA only).
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<AggregationMethod>,
        #[arg(long)]
        collapse: Option<CollapseMode>,
        /// Feature stride; ignored when `--table` is given.
        #[arg(long)]
        stride: Option<u32>,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode an annotation into training target maps.
    Encode {
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long)]
        mode: Option<ConfidenceMode>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode target maps into detections.
    Decode {
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        frame: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score detections against annotations.
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        /// One annotation document or a JSON array of them.
        #[arg(long)]
        annotations: PathBuf,
        /// Ground matching distance in meters.
        #[arg(long)]
        distance: Option<f64>,
        #[arg(long)]
        interpolation: Option<ApInterpolation>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare ground-plane smearing of single- and multi-height homographies
    /// against voxel aggregation on one scene.
    DemoDistortion {
        #[command(flatten)]
        scene: SceneFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and per-frame time across voxel layer counts or grid heights.
    Sweep {
        #[arg(long, value_enum)]
        param: Option<SweepParam>,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        scene: SceneFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end run on synthetic frames.
    Pipeline {
        #[arg(long)]
        frames: Option<usize>,
        #[command(flatten)]
        scene: SceneFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
    if let Some(v) = v {
        *slot = v.clone();
    }
}

/// Resolves the configuration and runs one command.
pub fn run(cli: &Cli) -> CliResult<RunManifest> {
    let file = cli.config.as_deref();
    match &cli.command {
        Command::Scenegen {
            scene,
            channels,
            stride,
            out,
        } => {
            let mut cfg: ScenegenConfig = load(file)?;
            scene.apply(&mut cfg.scene);
            set(&mut cfg.channels, channels);
            set(&mut cfg.stride, stride);
            commands::scenegen(&cfg, out)
        }
        Command::Project {
            calibration,
            grid,
            stride,
            out,
        } => {
            let mut cfg: ProjectConfig = load(file)?;
            relayer(&mut cfg.grid, grid.layers, grid.grid_height)?;
            set(&mut cfg.stride, stride);
            commands::project(&cfg, calibration, out)
        }
        Command::Aggregate {
            calibration,
            features,
            table,
            method,
            collapse,
            stride,
            grid,
            out,
        } => {
            let mut cfg: AggregateConfig = load(file)?;
            set(&mut cfg.method, method);
            set(&mut cfg.collapse, collapse);
            set(&mut cfg.stride, stride);
            relayer(&mut cfg.grid, grid.layers, grid.grid_height)?;
            commands::aggregate(&cfg, calibration, features, table.as_deref(), out)
        }
        Command::Encode {
            annotation,
            mode,
            gamma,
            out,
        } => {
            let mut cfg: EncodeConfig = load(file)?;
            set(&mut cfg.encoding.mode, mode);
            set(&mut cfg.encoding.gamma, gamma);
            commands::encode(&cfg, annotation, out)
        }
        Command::Decode {
            targets,
            threshold,
            gamma,
            frame,
            out,
        } => {
            let mut cfg: DecodeConfig = load(file)?;
            set(&mut cfg.decoder.score_threshold, threshold);
            set(&mut cfg.gamma, gamma);
            set(&mut cfg.frame, frame);
            commands::decode_targets(&cfg, targets, out)
        }
        Command::Evaluate {
            detections,
            annotations,
            distance,
            interpolation,
            out,
        } => {
            let mut cfg: EvaluateConfig = load(file)?;
            set(&mut cfg.matching.distance_threshold, distance);
            set(&mut cfg.matching.interpolation, interpolation);
            commands::evaluate(&cfg, detections, annotations, out)
        }
        Command::DemoDistortion { scene, out } => {
            let mut cfg: DistortionDemoConfig = load(file)?;
            scene.apply(&mut cfg.scene);
            commands::demo_distortion(&cfg, out)
        }
        Command::Sweep {
            param,
            values,
            frames,
            scene,
            out,
        } => {
            let mut cfg: SweepConfig = load(file)?;
            set(&mut cfg.param, param);
            set(&mut cfg.values, values);
            set(&mut cfg.frames, frames);
            scene.apply(&mut cfg.scene);
            Ok(commands::sweep(&cfg, out)?.1)
        }
        Command::Pipeline {
            frames,
            scene,
            grid,
            out,
        } => {
            let mut cfg: PipelineConfig = load(file)?;
            set(&mut cfg.frames, frames);
            scene.apply(&mut cfg.scene);
            set(&mut cfg.layers, &grid.layers);
            set(&mut cfg.grid_height, &grid.grid_height);
            Ok(commands::pipeline(&cfg, out)?.1)
        }
    }
}

/// Directory a command writes into.
pub fn out_dir(cli: &Cli) -> &Path {
    match &cli.command {
        Command::Scenegen { out, .. }
        | Command::Project { out, .. }
        | Command::Aggregate { out, .. }
        | Command::Encode { out, .. }
        | Command::Decode { out, .. }
        | Command::Evaluate { out, .. }
        | Command::DemoDistortion { out, .. }
        | Command::Sweep { out, .. }
        | Command::Pipeline { out, .. } => out,
    }
}
