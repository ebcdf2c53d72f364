//! Feature encoders feeding the correlation filter.
//!
//! Every encoder implements [`FeatureExtractor`] and is registered by name
//! in [`extractors`]: `fhog`, `raw-channels`, `fhog-plus-raw` and
//! `deep-from-file`. The last one has no pixel path; its tensors come from
//! FMAP files and are cut out with [`project_roi`].

mod fhog;
mod project;
mod window;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ChannelStack;
use crate::registry::Registry;

pub use fhog::{extract_fhog, FHOG_CHANNELS};
pub use project::{div_round_half_up, project_cells, project_fixed, project_roi};
pub use window::{center_channels, hann, hann_window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: String,
    pub cell_size: usize,
    /// Source channels to use. fHoG runs on their mean; raw features keep
    /// them as separate channels. `None` selects every channel.
    pub channel_subset: Option<Vec<usize>>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: "fhog".into(),
            cell_size: 4,
            channel_subset: None,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0 {
            return Err(Error::Config("feature cell_size must be at least 1".into()));
        }
        if !extractors().contains(&self.kind) {
            return Err(Error::UnknownStrategy {
                kind: "feature kind",
                name: self.kind.clone(),
                available: extractors().names().collect::<Vec<_>>().join(", "),
            });
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn FeatureExtractor>> {
        self.validate()?;
        extractors().create(&self.kind, self)
    }

    fn subset(&self) -> &[usize] {
        self.channel_subset.as_deref().unwrap_or(&[])
    }
}

/// A feature encoder turning an image patch into a feature tensor whose
/// cells are `cell_size` pixels wide.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &'static str;

    fn cell_size(&self) -> usize;

    fn extract(&self, patch: &ChannelStack) -> Result<ChannelStack>;

    /// True when features are ingested from FMAP files rather than
    /// computed from pixels.
    fn reads_feature_maps(&self) -> bool {
        false
    }
}

fn check_subset(subset: &[usize], channels: usize) -> Result<()> {
    match subset.iter().find(|&&c| c >= channels) {
        Some(c) => Err(Error::Dimension(format!("channel {c} out of range for {channels}-channel input"))),
        None => Ok(()),
    }
}

/// Mean-pools each channel over `cell_size` blocks and subtracts the
/// per-channel mean of the pooled grid.
pub fn extract_raw(stack: &ChannelStack, cell_size: usize) -> Result<ChannelStack> {
    if cell_size == 0 {
        return Err(Error::Dimension("cell size must be at least 1".into()));
    }
    let (w, h) = (stack.width(), stack.height());
    if w < cell_size || h < cell_size {
        return Err(Error::Dimension(format!("{w}x{h} image is smaller than one {cell_size}px cell")));
    }
    let (cw, ch) = (w / cell_size, h / cell_size);
    let mut out = ChannelStack::zeros(cw, ch, stack.channels());
    let inv_area = 1.0 / (cell_size * cell_size) as f64;
    for c in 0..stack.channels() {
        let src = stack.plane(c);
        let mut pooled = vec![0.0f64; cw * ch];
        for y in 0..ch * cell_size {
            for x in 0..cw * cell_size {
                pooled[(y / cell_size) * cw + x / cell_size] += src[y * w + x] as f64;
            }
        }
        pooled.iter_mut().for_each(|v| *v *= inv_area);
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        for (o, p) in out.plane_mut(c).iter_mut().zip(&pooled) {
            *o = (p - mean) as f32;
        }
    }
    Ok(out)
}

pub struct FhogExtractor {
    pub cell_size: usize,
    pub gray_channels: Vec<usize>,
}

impl FeatureExtractor for FhogExtractor {
    fn name(&self) -> &'static str {
        "fhog"
    }

    fn cell_size(&self) -> usize {
        self.cell_size
    }

    fn extract(&self, patch: &ChannelStack) -> Result<ChannelStack> {
        check_subset(&self.gray_channels, patch.channels())?;
        extract_fhog(&patch.mean_of_channels(&self.gray_channels)?, self.cell_size)
    }
}

pub struct RawExtractor {
    pub cell_size: usize,
    pub channels: Vec<usize>,
}

impl FeatureExtractor for RawExtractor {
    fn name(&self) -> &'static str {
        "raw-channels"
    }

    fn cell_size(&self) -> usize {
        self.cell_size
    }

    fn extract(&self, patch: &ChannelStack) -> Result<ChannelStack> {
        if self.channels.is_empty() {
            extract_raw(patch, self.cell_size)
        } else {
            extract_raw(&patch.select_channels(&self.channels)?, self.cell_size)
        }
    }
}

/// fHoG channels followed by the raw spectral channels on the same grid.
pub struct FhogPlusRawExtractor {
    fhog: FhogExtractor,
    raw: RawExtractor,
}

impl FeatureExtractor for FhogPlusRawExtractor {
    fn name(&self) -> &'static str {
        "fhog-plus-raw"
    }

    fn cell_size(&self) -> usize {
        self.fhog.cell_size
    }

    fn extract(&self, patch: &ChannelStack) -> Result<ChannelStack> {
        self.fhog.extract(patch)?.concat_channels(&self.raw.extract(patch)?)
    }
}

pub struct DeepFromFile {
    pub cell_size: usize,
}

impl FeatureExtractor for DeepFromFile {
    fn name(&self) -> &'static str {
        "deep-from-file"
    }

    fn cell_size(&self) -> usize {
        self.cell_size
    }

    fn extract(&self, _patch: &ChannelStack) -> Result<ChannelStack> {
        Err(Error::Config(
            "deep-from-file features are read from FMAP files, not computed from pixels".into(),
        ))
    }

    fn reads_feature_maps(&self) -> bool {
        true
    }
}

pub fn extractors() -> Registry<dyn FeatureExtractor, FeatureConfig> {
    let mut reg: Registry<dyn FeatureExtractor, FeatureConfig> = Registry::new("feature kind");
    reg.register("fhog", |c| {
        Ok(Box::new(FhogExtractor {
            cell_size: c.cell_size,
            gray_channels: c.subset().to_vec(),
        }))
    });
    reg.register("raw-channels", |c| {
        Ok(Box::new(RawExtractor {
            cell_size: c.cell_size,
            channels: c.subset().to_vec(),
        }))
    });
    reg.register("fhog-plus-raw", |c| {
        Ok(Box::new(FhogPlusRawExtractor {
            fhog: FhogExtractor {
                cell_size: c.cell_size,
                gray_channels: c.subset().to_vec(),
            },
            raw: RawExtractor {
                cell_size: c.cell_size,
                channels: Vec::new(),
            },
        }))
    });
    reg.register("deep-from-file", |c| Ok(Box::new(DeepFromFile { cell_size: c.cell_size })));
    reg
}
