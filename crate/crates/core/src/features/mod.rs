//! Per-keyframe visual descriptors and their persisted string forms.

pub mod color;
pub mod edge;
pub mod glcm;
pub mod regions;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use color::{color_histogram, ColorHistogram, JointHistogram};
pub use edge::{edge_density, EdgeDensity};
pub use glcm::{glcm_features, CorrelationMode, Glcm, GlcmFeatures};
pub use regions::major_regions;

use crate::raster::{to_gray, RgbRaster};

/// Column capacities of the keyframe table.
pub const SCH_CAPACITY: usize = 1500;
pub const EDGE_CAPACITY: usize = 250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("image width {width} too narrow for co-occurrence step {step}")]
    TooNarrow { width: usize, step: usize },
    #[error("image {width}x{height} too small for edge detection (need 3x3)")]
    TooSmall { width: usize, height: usize },
    #[error("{column} string is {len} chars, column holds {cap}")]
    Overflow {
        column: &'static str,
        len: usize,
        cap: usize,
    },
    #[error("parse failure: {0}")]
    Parse(String),
}

pub(crate) fn check_capacity(column: &'static str, s: &str, cap: usize) -> Result<(), FeatureError> {
    let len = s.chars().count();
    if len > cap {
        return Err(FeatureError::Overflow { column, len, cap });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub glcm_step: usize,
    pub correlation: CorrelationMode,
    pub edge_threshold: u32,
    pub major_region_percent: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            glcm_step: 1,
            correlation: CorrelationMode::Literal,
            edge_threshold: edge::DEFAULT_EDGE_THRESHOLD,
            major_region_percent: regions::DEFAULT_MAJOR_REGION_PERCENT,
        }
    }
}

/// Everything stored about one keyframe's content.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeFeatures {
    pub sch: JointHistogram,
    pub glcm: GlcmFeatures,
    pub edges: EdgeDensity,
    pub major_regions: u32,
}

/// The serialized columns, ready to persist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureStrings {
    pub sch: String,
    pub glcm: String,
    pub edgedensity: String,
    pub majorregions: u32,
}

impl KeyframeFeatures {
    pub fn extract(img: &RgbRaster, cfg: &FeatureConfig) -> Result<Self, FeatureError> {
        let gray = to_gray(img);
        Ok(Self {
            sch: color_histogram(img).joint,
            glcm: glcm_features(&gray, cfg.glcm_step, cfg.correlation)?,
            edges: edge_density(&gray, cfg.edge_threshold)?,
            major_regions: major_regions(img, cfg.major_region_percent),
        })
    }

    pub fn to_strings(&self) -> Result<FeatureStrings, FeatureError> {
        Ok(FeatureStrings {
            sch: self.sch.serialize()?,
            glcm: self.glcm.to_string(),
            edgedensity: self.edges.serialize()?,
            majorregions: self.major_regions,
        })
    }

    pub fn from_strings(s: &FeatureStrings) -> Result<Self, FeatureError> {
        Ok(Self {
            sch: s.sch.parse()?,
            glcm: s.glcm.parse()?,
            edges: s.edgedensity.parse()?,
            major_regions: s.majorregions,
        })
    }
}
