//! Per-command configuration. A command starts from `Default`, replaces it
//! with the `--config` file when one is given (missing keys keep their
//! defaults), then applies the flags that were passed explicitly.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vfa::analysis::{DistortionConfig, OccupancyConfig};
use vfa::decoding::DecoderConfig;
use vfa::encoding::{EncodingParams, MeanDims};
use vfa::metrics::MatchConfig;
use vfa::scenegen::SceneConfig;
use vfa::voxel::{CollapseMode, VoxelGridSpec};

use crate::error::{CliError, CliResult};

/// Reads a JSON config, or the defaults when `path` is `None`.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn default_mean() -> [f64; 3] {
    SceneConfig::default().mean_dims().as_array()
}

pub fn mean_dims(m: [f64; 3]) -> CliResult<MeanDims> {
    Ok(MeanDims::new(m[0], m[1], m[2])?)
}

/// Re-slices `grid` vertically when either flag is given; the total height
/// is kept unless `height` overrides it.
pub fn relayer(
    grid: &mut VoxelGridSpec,
    layers: Option<usize>,
    height: Option<f64>,
) -> CliResult<()> {
    if layers.is_some() || height.is_some() {
        let n = layers.unwrap_or(grid.nz);
        let h = height.unwrap_or(grid.nz as f64 * grid.voxel_h);
        *grid = grid.with_layers(n, h)?;
    }
    Ok(())
}

fn check_render(channels: usize, stride: u32) -> CliResult<()> {
    if channels == 0 || stride == 0 {
        return Err(CliError::Validation(
            "channels and stride must be at least 1".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenegenConfig {
    pub scene: SceneConfig,
    /// Also write one rendered feature tensor per camera.
    pub render: bool,
    pub channels: usize,
    pub stride: u32,
}

impl Default for ScenegenConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            render: true,
            channels: 16,
            stride: 4,
        }
    }
}

impl ScenegenConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.scene.validate()?;
        check_render(self.channels, self.stride)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub grid: VoxelGridSpec,
    pub stride: u32,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            grid: VoxelGridSpec::multiviewc(),
            stride: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    /// Voxel projection and box pooling.
    Vfa,
    /// Plane homographies at `heights`.
    Homography,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateConfig {
    pub method: AggregationMethod,
    pub grid: VoxelGridSpec,
    pub stride: u32,
    pub collapse: CollapseMode,
    /// Plane heights of the homography method.
    pub heights: Vec<f64>,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        Self {
            method: AggregationMethod::Vfa,
            grid: VoxelGridSpec::multiviewc(),
            stride: 4,
            collapse: CollapseMode::Mean,
            heights: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub grid: VoxelGridSpec,
    pub mean_dims: [f64; 3],
    pub encoding: EncodingParams,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            grid: VoxelGridSpec::multiviewc(),
            mean_dims: default_mean(),
            encoding: EncodingParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub grid: VoxelGridSpec,
    pub mean_dims: [f64; 3],
    pub gamma: f64,
    pub decoder: DecoderConfig,
    /// Frame id written on every detection.
    pub frame: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            grid: VoxelGridSpec::multiviewc(),
            mean_dims: default_mean(),
            gamma: EncodingParams::default().gamma,
            decoder: DecoderConfig::default(),
            frame: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub matching: MatchConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionDemoConfig {
    pub scene: SceneConfig,
    pub distortion: DistortionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Number of voxel layers over a fixed grid height.
    #[value(name = "n_layers")]
    NLayers,
    /// Total grid height in meters over a fixed number of layers.
    #[value(name = "voxel_height")]
    VoxelHeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Scenes per value; frame `f` uses seed `scene.seed + f`.
    pub frames: usize,
    pub scene: SceneConfig,
    pub channels: usize,
    pub stride: u32,
    /// Layer count while sweeping the height.
    pub layers: usize,
    /// Grid height while sweeping the layer count.
    pub grid_height: f64,
    pub occupancy: OccupancyConfig,
    /// Ground distance within which a detection matches (meters).
    pub distance_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            param: SweepParam::NLayers,
            values: vec![1.0, 2.0, 4.0, 8.0],
            frames: 4,
            scene: SceneConfig::default(),
            channels: 16,
            stride: 4,
            layers: 5,
            grid_height: 1.6,
            occupancy: OccupancyConfig::default(),
            distance_threshold: MatchConfig::default().distance_threshold,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.scene.validate()?;
        check_render(self.channels, self.stride)?;
        if self.values.is_empty() || self.frames == 0 {
            return Err(CliError::Validation(
                "sweep needs at least one value and one frame".into(),
            ));
        }
        for &v in &self.values {
            let ok = match self.param {
                SweepParam::NLayers => v >= 1.0 && v.fract() == 0.0,
                SweepParam::VoxelHeight => v > 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(CliError::Validation(format!(
                    "{v} is not a valid {:?} value",
                    self.param
                )));
            }
        }
        if self.distance_threshold.is_nan() || self.distance_threshold <= 0.0 {
            return Err(CliError::Validation(
                "distance threshold must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Grid for one swept value.
    pub fn grid(&self, value: f64) -> CliResult<VoxelGridSpec> {
        let base = self.scene.grid();
        Ok(match self.param {
            SweepParam::NLayers => base.with_layers(value as usize, self.grid_height)?,
            SweepParam::VoxelHeight => base.with_layers(self.layers, value)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    /// Frame `f` uses seed `scene.seed + f`.
    pub frames: usize,
    pub channels: usize,
    pub stride: u32,
    pub layers: usize,
    pub grid_height: f64,
    pub encoding: EncodingParams,
    pub occupancy: OccupancyConfig,
    pub matching: MatchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            frames: 4,
            channels: 16,
            stride: 4,
            layers: 5,
            grid_height: 1.6,
            encoding: EncodingParams::default(),
            occupancy: OccupancyConfig::default(),
            matching: MatchConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.scene.validate()?;
        check_render(self.channels, self.stride)?;
        if self.frames == 0 {
            return Err(CliError::Validation(
                "pipeline needs at least one frame".into(),
            ));
        }
        self.encoding.validate()?;
        self.matching.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> CliResult<VoxelGridSpec> {
        Ok(self
            .scene
            .grid()
            .with_layers(self.layers, self.grid_height)?)
    }
}
