//! One correlation filter evaluated over a grid of overlapping detection
//! windows, fused by PSR, with the per-frame detect / fuse / train loop.

mod fusion;

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{center_channels, hann_window, project_fixed, FeatureConfig, FeatureExtractor};
use crate::imaging::{crop, ChannelStack, Rect};
use crate::kcf::{update, FilterModel, Kcf, KcfParams, ResponseMap};
use crate::registration::{warp, Homography};

pub use fusion::{fusions, Fused, Fusion, FusionFrame, HardFusion, SoftFusion};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub full_roi_size: i64,
    pub roi_size: i64,
    pub grid_n: usize,
    pub psr_threshold: f64,
    pub fusion: String,
    /// Cut detection and training windows out of one feature map computed
    /// over the full ROI instead of extracting each window separately.
    pub reuse_training_features: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            full_roi_size: 96,
            roi_size: 48,
            grid_n: 4,
            psr_threshold: 7.0,
            fusion: "soft".into(),
            reuse_training_features: false,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.roi_size <= 0 || self.full_roi_size < self.roi_size {
            return Err(Error::Config(format!(
                "need 0 < roi_size <= full_roi_size, got {} and {}",
                self.roi_size, self.full_roi_size
            )));
        }
        if self.grid_n == 0 {
            return Err(Error::Config("grid_n must be at least 1".into()));
        }
        if self.grid_n > 1 {
            let span = self.full_roi_size - self.roi_size;
            let steps = self.grid_n as i64 - 1;
            if span == 0 || span % steps != 0 {
                return Err(Error::Config(format!(
                    "({} - {}) / {} is not a positive integer stride",
                    self.full_roi_size, self.roi_size, steps
                )));
            }
        }
        if !(self.psr_threshold >= 0.0 && self.psr_threshold.is_finite()) {
            return Err(Error::Config(format!("psr_threshold {} must be >= 0", self.psr_threshold)));
        }
        if !fusions().contains(&self.fusion) {
            return Err(Error::UnknownStrategy {
                kind: "fusion",
                name: self.fusion.clone(),
                available: fusions().names().collect::<Vec<_>>().join(", "),
            });
        }
        Ok(())
    }

    /// Pixel step between neighbouring ROIs; 0 for a single ROI.
    pub fn stride(&self) -> i64 {
        if self.grid_n > 1 {
            (self.full_roi_size - self.roi_size) / (self.grid_n as i64 - 1)
        } else {
            0
        }
    }

    /// Fraction of a ROI's width shared with its neighbour.
    pub fn overlap(&self) -> f64 {
        if self.grid_n > 1 {
            (self.roi_size - self.stride()).max(0) as f64 / self.roi_size as f64
        } else {
            0.0
        }
    }

    pub fn roi_count(&self) -> usize {
        self.grid_n * self.grid_n
    }

    pub fn full_roi(&self, center: (f64, f64)) -> Rect {
        Rect::centered(center.0, center.1, self.full_roi_size)
    }
}

/// The `grid_n x grid_n` detection windows tiling the full ROI around
/// `center`, row-major. A single ROI is centred on `center`.
pub fn grid_rois(cfg: &GridConfig, center: (f64, f64)) -> Result<Vec<Rect>> {
    cfg.validate()?;
    if cfg.grid_n == 1 {
        return Ok(vec![Rect::centered(center.0, center.1, cfg.roi_size)]);
    }
    let full = cfg.full_roi(center);
    let s = cfg.stride();
    Ok((0..cfg.grid_n as i64)
        .flat_map(|j| (0..cfg.grid_n as i64).map(move |i| (i, j)))
        .map(|(i, j)| Rect::new(full.x + i * s, full.y + j * s, cfg.roi_size, cfg.roi_size))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub schema_version: u32,
    pub features: FeatureConfig,
    pub kcf: KcfParams,
    pub grid: GridConfig,
    /// Consecutive coasting frames tolerated before the track is lost.
    pub coasting_limit: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            features: FeatureConfig::default(),
            kcf: KcfParams::default(),
            grid: GridConfig::default(),
            coasting_limit: 10,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "tracker config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.features.validate()?;
        self.kcf.validate()?;
        self.grid.validate()?;
        if self.kcf.cell_size != self.features.cell_size {
            return Err(Error::Config(format!(
                "kcf.cell_size {} differs from features.cell_size {}",
                self.kcf.cell_size, self.features.cell_size
            )));
        }
        if (self.grid.roi_size as usize) < self.features.cell_size {
            return Err(Error::Config("roi_size is smaller than one feature cell".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// What a frame offers the tracker: canonical-frame pixels, or a feature
/// map covering the whole canonical frame at `stride` pixels per cell.
#[derive(Debug, Clone, Copy)]
pub enum FrameSource<'a> {
    Pixels(&'a ChannelStack),
    FeatureMap { map: &'a ChannelStack, stride: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub frame: u64,
    pub center: (f64, f64),
    pub best_psr: f64,
    pub coasting: bool,
    pub lost: bool,
}

/// A feature map and the pixel position of its first cell.
struct SharedMap<'a> {
    map: Cow<'a, ChannelStack>,
    stride: usize,
    origin: (i64, i64),
    /// Pixel area the map was computed from.
    coverage: Option<Rect>,
}

impl SharedMap<'_> {
    fn window(&self, roi: Rect, cells: usize) -> Result<ChannelStack> {
        project_fixed(&self.map, self.stride, roi.translate(-self.origin.0, -self.origin.1), cells, cells)
    }

    fn covers(&self, roi: &Rect) -> bool {
        self.coverage.is_none_or(|c| c.contains_rect(roi))
    }
}

/// Everything needed to turn a frame into mean-centred, Hanning-windowed
/// windows.
struct Windows {
    grid: GridConfig,
    extractor: Box<dyn FeatureExtractor>,
    cell_px: usize,
}

impl Windows {
    fn roi_cells(&self) -> usize {
        (self.grid.roi_size as usize / self.cell_px).max(1)
    }

    fn shared_map<'a>(&self, source: FrameSource<'a>, center: (f64, f64)) -> Result<Option<SharedMap<'a>>> {
        match source {
            FrameSource::Pixels(_) if self.extractor.reads_feature_maps() => {
                return Err(Error::Contract(format!(
                    "feature kind '{}' needs feature maps, got pixels",
                    self.extractor.name()
                )));
            }
            FrameSource::FeatureMap { stride, .. } if stride != self.cell_px => {
                return Err(Error::Contract(format!(
                    "feature map stride {stride} differs from the tracker's {}",
                    self.cell_px
                )));
            }
            _ => {}
        }
        Ok(match source {
            FrameSource::FeatureMap { map, stride } => Some(SharedMap {
                map: Cow::Borrowed(map),
                stride,
                origin: (0, 0),
                coverage: None,
            }),
            FrameSource::Pixels(frame) if self.grid.reuse_training_features => {
                let full = self.grid.full_roi(center);
                Some(SharedMap {
                    map: Cow::Owned(self.extractor.extract(&crop(frame, full))?),
                    stride: self.cell_px,
                    origin: (full.x, full.y),
                    coverage: Some(full),
                })
            }
            FrameSource::Pixels(_) => None,
        })
    }

    fn features(&self, source: FrameSource<'_>, shared: Option<&SharedMap<'_>>, roi: Rect) -> Result<ChannelStack> {
        let raw = match (shared, source) {
            (Some(m), _) if m.covers(&roi) => m.window(roi, self.roi_cells())?,
            (_, FrameSource::Pixels(frame)) => self.extractor.extract(&crop(frame, roi))?,
            (_, FrameSource::FeatureMap { .. }) => unreachable!("frame maps cover every window"),
        };
        Ok(hann_window(&center_channels(&raw)))
    }

    fn training(&self, source: FrameSource<'_>, shared: Option<&SharedMap<'_>>, center: (f64, f64)) -> Result<ChannelStack> {
        self.features(source, shared, Rect::centered(center.0, center.1, self.grid.roi_size))
    }
}

/// Single-target tracker: one filter model, one position.
pub struct Tracker {
    config: TrackerConfig,
    kcf: Kcf,
    windows: Windows,
    fusion: Box<dyn Fusion>,
    model: FilterModel,
    center: (f64, f64),
    coast_streak: usize,
    lost: bool,
}

impl Tracker {
    /// Trains the initial model on `source` with the target at `center`.
    pub fn init(config: &TrackerConfig, source: FrameSource<'_>, center: (f64, f64)) -> Result<Self> {
        config.validate()?;
        let kcf = Kcf::new(config.kcf.clone())?;
        let fusion = fusions().create(&config.grid.fusion, &())?;
        let cell_px = match source {
            FrameSource::Pixels(_) => config.features.cell_size,
            FrameSource::FeatureMap { stride, .. } => stride,
        };
        if cell_px == 0 {
            return Err(Error::Contract("feature map stride must be positive".into()));
        }
        let windows = Windows {
            grid: config.grid.clone(),
            extractor: config.features.build()?,
            cell_px,
        };
        let shared = windows.shared_map(source, center)?;
        let model = kcf.train(&windows.training(source, shared.as_ref(), center)?)?;
        Ok(Tracker {
            config: config.clone(),
            kcf,
            windows,
            fusion,
            model,
            center,
            coast_streak: 0,
            lost: false,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn kcf(&self) -> &Kcf {
        &self.kcf
    }

    pub fn model(&self) -> &FilterModel {
        &self.model
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn is_lost(&self) -> bool {
        self.lost
    }

    /// Pixels per feature cell.
    pub fn cell_px(&self) -> usize {
        self.windows.cell_px
    }

    /// One response per ROI, in ROI order. ROIs are evaluated in parallel
    /// on the current rayon pool.
    pub fn detect_grid(&self, source: FrameSource<'_>, rois: &[Rect]) -> Result<Vec<ResponseMap>> {
        let shared = self.windows.shared_map(source, self.center)?;
        self.detect_with(source, shared.as_ref(), rois)
    }

    fn detect_with(&self, source: FrameSource<'_>, shared: Option<&SharedMap<'_>>, rois: &[Rect]) -> Result<Vec<ResponseMap>> {
        rois.par_iter()
            .map(|&roi| {
                let z = self.windows.features(source, shared, roi)?;
                self.kcf.detect(&self.model, &z)
            })
            .collect()
    }

    pub fn fuse(&self, responses: &[ResponseMap], rois: &[Rect]) -> Result<Fused> {
        self.fusion.fuse(
            responses,
            rois,
            &FusionFrame {
                full_roi: self.config.grid.full_roi(self.center),
                cell_px: self.windows.cell_px as f64,
                psr_threshold: self.config.grid.psr_threshold,
                previous: self.center,
            },
        )
    }

    /// Detect, fuse and (unless coasting) retrain on a canonical-frame
    /// source.
    pub fn step(&mut self, source: FrameSource<'_>, frame: u64) -> Result<TrackState> {
        let rois = grid_rois(&self.config.grid, self.center)?;
        let shared = self.windows.shared_map(source, self.center)?;
        let responses = self.detect_with(source, shared.as_ref(), &rois)?;
        let fused = self.fuse(&responses, &rois)?;
        if fused.coasting {
            self.coast_streak += 1;
            if self.coast_streak > self.config.coasting_limit {
                self.lost = true;
            }
        } else {
            self.coast_streak = 0;
            self.center = fused.center;
            let features = self.windows.training(source, shared.as_ref(), fused.center)?;
            let fresh = self.kcf.train(&features)?;
            self.model = update(&self.model, &fresh, self.config.kcf.learning_rate)?;
        }
        Ok(TrackState {
            frame,
            center: self.center,
            best_psr: fused.best_psr,
            coasting: fused.coasting,
            lost: self.lost,
        })
    }

    /// Warps a raw frame into the canonical frame with `to_canonical`, then
    /// steps on its pixels.
    pub fn step_frame(&mut self, frame: &ChannelStack, to_canonical: &Homography, index: u64) -> Result<TrackState> {
        let warped = warp(frame, to_canonical)?;
        self.step(FrameSource::Pixels(&warped.stack), index)
    }
}
