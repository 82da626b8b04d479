//! Keyframe selection over an ordered frame sequence.
//!
//! Each run of frames that stays within `threshold` (L1 over the 30×30 gray
//! thumbnail) of the frame that opened the run collapses onto that opener.

use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{decode_frame, thumbnail, GrayRaster, RasterError, RgbRaster};

pub const DEFAULT_THRESHOLD: f64 = 800.0;

/// File extensions picked up by [`ingest_frames`].
pub const FRAME_EXTENSIONS: &[&str] = &["ppm", "pgm", "pnm", "png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum KeyframeError {
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("no frame files found in {0}")]
    EmptyDirectory(PathBuf),
    #[error("none of the {0} frame files could be decoded")]
    NoDecodableFrames(usize),
    #[error("frame dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("threshold must be a non-negative finite number (got {0})")]
    InvalidThreshold(f64),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("decoding {name}: {source}")]
    Decode { name: String, source: RasterError },
}

/// Where the full-resolution pixels of a frame live.
#[derive(Debug, Clone)]
pub enum FrameSource {
    File(PathBuf),
    Memory(Arc<RgbRaster>),
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub name: String,
    pub source: FrameSource,
    /// Canonical 30×30 grayscale thumbnail.
    pub thumb: GrayRaster,
}

impl Frame {
    pub fn from_raster(name: impl Into<String>, img: RgbRaster) -> Self {
        let thumb = thumbnail(&img);
        Self {
            name: name.into(),
            source: FrameSource::Memory(Arc::new(img)),
            thumb,
        }
    }

    /// Full-resolution pixels, decoding from disk when needed.
    pub fn load_rgb(&self) -> Result<Arc<RgbRaster>, KeyframeError> {
        match &self.source {
            FrameSource::Memory(img) => Ok(Arc::clone(img)),
            FrameSource::File(path) => {
                let bytes = fs::read(path).map_err(|source| KeyframeError::Io {
                    path: path.clone(),
                    source,
                })?;
                decode_frame(&bytes).map(Arc::new).map_err(|source| KeyframeError::Decode {
                    name: self.name.clone(),
                    source,
                })
            }
        }
    }
}

/// Ordered frames of one video.
#[derive(Debug, Clone, Default)]
pub struct FrameSeq {
    pub frames: Vec<Frame>,
    /// Directory the frames were ingested from, if any.
    pub dir: Option<PathBuf>,
}

impl FrameSeq {
    pub fn from_rasters<I, S>(frames: I) -> Self
    where
        I: IntoIterator<Item = (S, RgbRaster)>,
        S: Into<String>,
    {
        Self {
            frames: frames
                .into_iter()
                .map(|(name, img)| Frame::from_raster(name, img))
                .collect(),
            dir: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn thumbs(&self) -> impl Iterator<Item = &GrayRaster> {
        self.frames.iter().map(|f| &f.thumb)
    }

    pub fn extract_keyframes(&self, threshold: f64) -> Result<KeyframeSelection, KeyframeError> {
        let thumbs: Vec<&GrayRaster> = self.thumbs().collect();
        extract_keyframes(&thumbs, threshold)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub decoded: usize,
    pub skipped: Vec<SkippedFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFrame {
    pub name: String,
    pub reason: String,
}

/// Read every frame file in `dir`, sorted by file name.
///
/// Frames that fail to decode are skipped and listed in the report.
pub fn ingest_frames(dir: &Path) -> Result<(FrameSeq, IngestReport), KeyframeError> {
    let io_err = |source| KeyframeError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && has_frame_extension(p))
        .collect();
    if paths.is_empty() {
        return Err(KeyframeError::EmptyDirectory(dir.to_path_buf()));
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let decoded: Vec<(String, PathBuf, Result<GrayRaster, String>)> = paths
        .into_par_iter()
        .map(|path| {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let thumb = fs::read(&path)
                .map_err(|e| e.to_string())
                .and_then(|bytes| decode_frame(&bytes).map_err(|e| e.to_string()))
                .map(|img| thumbnail(&img));
            (name, path, thumb)
        })
        .collect();

    let total = decoded.len();
    let mut report = IngestReport::default();
    let mut frames = Vec::with_capacity(total);
    for (name, path, thumb) in decoded {
        match thumb {
            Ok(thumb) => frames.push(Frame {
                name,
                source: FrameSource::File(path),
                thumb,
            }),
            Err(reason) => {
                log::warn!("skipping frame {name}: {reason}");
                report.skipped.push(SkippedFrame { name, reason });
            }
        }
    }
    if frames.is_empty() {
        return Err(KeyframeError::NoDecodableFrames(total));
    }
    report.decoded = frames.len();
    Ok((
        FrameSeq {
            frames,
            dir: Some(dir.to_path_buf()),
        },
        report,
    ))
}

fn has_frame_extension(path: &Path) -> bool {
    path.extension()
        .and_then(OsStr::to_str)
        .is_some_and(|ext| FRAME_EXTENSIONS.iter().any(|e| ext.eq_ignore_ascii_case(e)))
}

/// Sum of absolute gray differences over all pixels.
pub fn frame_distance(a: &GrayRaster, b: &GrayRaster) -> Result<u64, KeyframeError> {
    if a.dims() != b.dims() {
        return Err(KeyframeError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&p, &q)| p.abs_diff(q) as u64)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSelection {
    /// Positions into the sequence, strictly increasing, starting at 0.
    pub indices: Vec<usize>,
    pub threshold_used: f64,
    /// For every frame, the index of the keyframe whose run absorbed it.
    pub run_opener: Vec<usize>,
}

impl KeyframeSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn extract_keyframes(
    thumbs: &[&GrayRaster],
    threshold: f64,
) -> Result<KeyframeSelection, KeyframeError> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(KeyframeError::InvalidThreshold(threshold));
    }
    let Some(first) = thumbs.first() else {
        return Err(KeyframeError::EmptySequence);
    };
    let mut indices = vec![0];
    let mut run_opener = vec![0; thumbs.len()];
    let mut opener = 0;
    let mut opener_thumb = *first;
    for (j, thumb) in thumbs.iter().enumerate().skip(1) {
        if frame_distance(opener_thumb, thumb)? as f64 > threshold {
            opener = j;
            opener_thumb = thumb;
            indices.push(j);
        }
        run_opener[j] = opener;
    }
    Ok(KeyframeSelection {
        indices,
        threshold_used: threshold,
        run_opener,
    })
}
