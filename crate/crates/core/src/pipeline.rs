//! The per-video processing chain shared by registration and querying:
//! keyframe selection, per-keyframe features and range bucket.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureConfig, KeyframeFeatures};
use crate::keyframe::{FrameSeq, KeyframeError, KeyframeSelection, DEFAULT_THRESHOLD};
use crate::motion::MotionConfig;
use crate::range_index::{assign_bucket, RangeBucket};
use crate::raster::{gray_histogram, to_gray, GrayRaster};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub keyframe_threshold: f64,
    pub features: FeatureConfig,
    pub motion: MotionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            keyframe_threshold: DEFAULT_THRESHOLD,
            features: FeatureConfig::default(),
            motion: MotionConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProcessedKeyframe {
    /// Position of the keyframe in its frame sequence.
    pub frame_index: usize,
    pub name: String,
    pub thumb: GrayRaster,
    /// Full-resolution grayscale, the image persisted for the keyframe.
    pub gray: GrayRaster,
    pub features: KeyframeFeatures,
    pub bucket: RangeBucket,
}

pub fn process_keyframes(
    seq: &FrameSeq,
    cfg: &PipelineConfig,
) -> Result<(KeyframeSelection, Vec<ProcessedKeyframe>), Error> {
    if seq.is_empty() {
        return Err(KeyframeError::EmptySequence.into());
    }
    let selection = seq.extract_keyframes(cfg.keyframe_threshold)?;
    let processed = selection
        .indices
        .par_iter()
        .map(|&i| {
            let frame = &seq.frames[i];
            let rgb = frame.load_rgb()?;
            let features = KeyframeFeatures::extract(&rgb, &cfg.features)?;
            let bucket = assign_bucket(&gray_histogram(&frame.thumb))?;
            Ok(ProcessedKeyframe {
                frame_index: i,
                name: frame.name.clone(),
                thumb: frame.thumb.clone(),
                gray: to_gray(&rgb),
                features,
                bucket,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((selection, processed))
}
