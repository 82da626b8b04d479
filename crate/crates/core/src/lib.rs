//! Content-based video retrieval: keyframe extraction, low-level visual
//! features, a gray-level range index, motion-trajectory matching and a
//! file-backed catalog.

use std::path::PathBuf;

use thiserror::Error;

pub mod catalog;
pub mod evalkit;
pub mod features;
pub mod keyframe;
pub mod motion;
pub mod pipeline;
pub mod range_index;
pub mod raster;
pub mod retrieval;
pub mod synth;

pub type VideoId = u64;
pub type KeyframeId = u64;

pub use catalog::{Catalog, KeyframeRecord, LoadReport, Snapshot, VideoRecord};
pub use evalkit::{BenchQuery, BenchReport, EvalError, Judgment, RecallMode};
pub use features::{FeatureConfig, FeatureError, FeatureStrings, KeyframeFeatures};
pub use keyframe::{ingest_frames, FrameSeq, IngestReport, KeyframeError, KeyframeSelection};
pub use motion::{motion_rank, MotionConfig, MotionError, MotionHit, Trajectory};
pub use pipeline::PipelineConfig;
pub use range_index::{assign_bucket, BucketTable, IndexError, RangeBucket};
pub use raster::{GrayRaster, RasterError, RgbRaster};
pub use retrieval::{search_by_clip, search_exhaustive, RankedEntry, RankedResult, SearchConfig, SearchOutcome};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Keyframe(#[from] KeyframeError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("video name is empty")]
    EmptyName,
    #[error("video name is {0} characters, the limit is 60")]
    NameTooLong(usize),
    #[error("no space left on the catalog volume")]
    StorageFull,
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: u64 },
    #[error("catalog journal is corrupt: {0}")]
    CorruptJournal(String),
    #[error("unsupported catalog format `{0}`")]
    UnsupportedFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feature vectors differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("catalog invariant violated: {0}")]
    Invariant(String),
    #[doc(hidden)]
    #[error("simulated crash")]
    SimulatedCrash,
}
