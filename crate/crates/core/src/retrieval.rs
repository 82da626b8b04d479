//! Combined feature vectors, Euclidean matching and ranked clip search.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::catalog::Snapshot;
use crate::features::KeyframeFeatures;
use crate::keyframe::{FrameSeq, KeyframeError};
use crate::pipeline::{process_keyframes, PipelineConfig};
use crate::range_index::RangeBucket;
use crate::{Error, KeyframeId, VideoId};

pub const HIST_DIMS: usize = 64;
pub const GLCM_DIMS: usize = 5;
pub const EDGE_DIMS: usize = 16;
pub const VECTOR_DIMS: usize = HIST_DIMS + GLCM_DIMS + EDGE_DIMS + 1;

const GLCM_START: usize = HIST_DIMS;
const EDGE_START: usize = GLCM_START + GLCM_DIMS;
const REGIONS_AT: usize = EDGE_START + EDGE_DIMS;

/// Corpus-wide ranges used to scale the unbounded components.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub glcm_min: [f64; GLCM_DIMS],
    pub glcm_max: [f64; GLCM_DIMS],
    pub regions_max: u32,
    pub keyframes: usize,
}

impl ScalingStats {
    pub fn from_features<'a>(features: impl IntoIterator<Item = &'a KeyframeFeatures>) -> Self {
        let mut stats = Self {
            glcm_min: [f64::INFINITY; GLCM_DIMS],
            glcm_max: [f64::NEG_INFINITY; GLCM_DIMS],
            ..Self::default()
        };
        for f in features {
            for (i, v) in f.glcm.as_array().into_iter().enumerate() {
                stats.glcm_min[i] = stats.glcm_min[i].min(v);
                stats.glcm_max[i] = stats.glcm_max[i].max(v);
            }
            stats.regions_max = stats.regions_max.max(f.major_regions);
            stats.keyframes += 1;
        }
        if stats.keyframes == 0 {
            return Self::default();
        }
        stats
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn histogram(&self) -> &[f64] {
        &self.values[..HIST_DIMS]
    }

    pub fn glcm(&self) -> &[f64] {
        &self.values[GLCM_START..EDGE_START]
    }
}

pub fn build_vector(f: &KeyframeFeatures, stats: &ScalingStats) -> FeatureVector {
    let mut values = Vec::with_capacity(VECTOR_DIMS);
    let total = f.sch.total() as f64;
    values.extend(f.sch.bins.iter().map(|&b| if total > 0.0 { b as f64 / total } else { 0.0 }));
    for (i, v) in f.glcm.as_array().into_iter().enumerate() {
        let (lo, hi) = (stats.glcm_min[i], stats.glcm_max[i]);
        let range = hi - lo;
        // values from outside the corpus (query keyframes) may land outside [0,1]
        values.push(if range > 0.0 && range.is_finite() { (v - lo) / range } else { 0.0 });
    }
    values.extend_from_slice(&f.edges.blocks);
    values.push(if stats.regions_max > 0 {
        f.major_regions as f64 / stats.regions_max as f64
    } else {
        0.0
    });
    FeatureVector { values }
}

pub fn euclidean_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, Error> {
    if a.values.len() != b.values.len() {
        return Err(Error::DimensionMismatch(a.values.len(), b.values.len()));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Per-block multipliers on squared differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockWeights {
    pub histogram: f64,
    pub glcm: f64,
    pub edge: f64,
    pub regions: f64,
}

impl Default for BlockWeights {
    fn default() -> Self {
        Self {
            histogram: 1.0,
            glcm: 1.0,
            edge: 1.0,
            regions: 1.0,
        }
    }
}

impl BlockWeights {
    fn is_uniform(&self) -> bool {
        *self == Self::default()
    }

    fn for_dim(&self, i: usize) -> f64 {
        match i {
            _ if i < GLCM_START => self.histogram,
            _ if i < EDGE_START => self.glcm,
            _ if i < REGIONS_AT => self.edge,
            _ => self.regions,
        }
    }
}

fn weighted_distance(a: &FeatureVector, b: &FeatureVector, w: &BlockWeights) -> f64 {
    if w.is_uniform() {
        return euclidean_distance(a, b).expect("catalog vectors share one dimension");
    }
    a.values
        .iter()
        .zip(&b.values)
        .enumerate()
        .map(|(i, (x, y))| w.for_dim(i) * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Video score is the smallest distance over all evaluated pairs.
    #[default]
    MinDistance,
    /// Mean over query keyframes of each one's best distance into the video.
    MeanOfBest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub k: usize,
    pub min_candidates: usize,
    pub max_distance: Option<f64>,
    pub aggregation: Aggregation,
    pub weights: BlockWeights,
    pub pipeline: PipelineConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: 10,
            min_candidates: 20,
            max_distance: None,
            aggregation: Aggregation::MinDistance,
            weights: BlockWeights::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub v_id: VideoId,
    pub distance: f64,
    /// Index into the query's frame sequence.
    pub best_query_kf: usize,
    pub best_catalog_kf: KeyframeId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTimings {
    /// Whole query: featurization, candidate lookup, matching.
    pub retrieval: Duration,
    /// Distance computation and sort only.
    pub matching: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub ranked: RankedResult,
    pub timings: SearchTimings,
    pub query_keyframes: usize,
}

/// A featurized query keyframe.
#[derive(Debug, Clone)]
pub struct QueryKeyframe {
    pub frame_index: usize,
    pub features: KeyframeFeatures,
    pub bucket: RangeBucket,
}

pub fn prepare_query(frames: &FrameSeq, cfg: &PipelineConfig) -> Result<Vec<QueryKeyframe>, Error> {
    if frames.is_empty() {
        return Err(KeyframeError::EmptySequence.into());
    }
    let (_, processed) = process_keyframes(frames, cfg)?;
    Ok(processed
        .into_iter()
        .map(|p| QueryKeyframe {
            frame_index: p.frame_index,
            features: p.features,
            bucket: p.bucket,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateMode {
    /// Candidates come from the query keyframe's range bucket, widened.
    Indexed,
    /// Every catalog keyframe is compared.
    Exhaustive,
}

struct VideoScore {
    best: (f64, usize, KeyframeId),
    per_query_best: HashMap<usize, f64>,
}

/// Rank catalog videos against prepared query keyframes. Returns the result
/// and the time spent in distance computation and sorting.
pub fn rank_prepared(
    snapshot: &Snapshot,
    query: &[QueryKeyframe],
    cfg: &SearchConfig,
    mode: CandidateMode,
) -> (RankedResult, Duration) {
    let mut matching = Duration::ZERO;
    let mut scores: HashMap<VideoId, VideoScore> = HashMap::new();
    let all: BTreeSet<KeyframeId>;
    let all_ref = if mode == CandidateMode::Exhaustive {
        all = snapshot.keyframes().map(|k| k.i_id).collect();
        Some(&all)
    } else {
        None
    };

    for q in query {
        let qv = build_vector(&q.features, snapshot.stats());
        let local;
        let candidates = match all_ref {
            Some(all) => all,
            None => {
                local = snapshot.buckets().candidate_set(q.bucket, cfg.min_candidates);
                &local
            }
        };
        let started = Instant::now();
        for &kf in candidates {
            let (Some(v), Some(rec)) = (snapshot.vector(kf), snapshot.keyframe(kf)) else {
                continue;
            };
            let d = weighted_distance(&qv, v, &cfg.weights);
            let entry = scores.entry(rec.v_id).or_insert_with(|| VideoScore {
                best: (f64::INFINITY, q.frame_index, kf),
                per_query_best: HashMap::new(),
            });
            if d < entry.best.0 || (d == entry.best.0 && (q.frame_index, kf) < (entry.best.1, entry.best.2)) {
                entry.best = (d, q.frame_index, kf);
            }
            let slot = entry.per_query_best.entry(q.frame_index).or_insert(f64::INFINITY);
            *slot = slot.min(d);
        }
        matching += started.elapsed();
    }

    let started = Instant::now();
    let mut entries: Vec<RankedEntry> = scores
        .into_iter()
        .map(|(v_id, s)| {
            let distance = match cfg.aggregation {
                Aggregation::MinDistance => s.best.0,
                Aggregation::MeanOfBest => {
                    s.per_query_best.values().sum::<f64>() / s.per_query_best.len() as f64
                }
            };
            RankedEntry {
                v_id,
                distance,
                best_query_kf: s.best.1,
                best_catalog_kf: s.best.2,
            }
        })
        .filter(|e| cfg.max_distance.is_none_or(|m| e.distance <= m))
        .collect();
    entries.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.v_id.cmp(&b.v_id)));
    entries.truncate(cfg.k);
    matching += started.elapsed();
    (RankedResult { entries }, matching)
}

fn search(
    snapshot: &Snapshot,
    frames: &FrameSeq,
    cfg: &SearchConfig,
    mode: CandidateMode,
) -> Result<SearchOutcome, Error> {
    let started = Instant::now();
    let query = prepare_query(frames, &cfg.pipeline)?;
    let (ranked, matching) = rank_prepared(snapshot, &query, cfg, mode);
    Ok(SearchOutcome {
        ranked,
        timings: SearchTimings {
            retrieval: started.elapsed(),
            matching,
        },
        query_keyframes: query.len(),
    })
}

/// Query by clip through the range index.
pub fn search_by_clip(snapshot: &Snapshot, frames: &FrameSeq, cfg: &SearchConfig) -> Result<SearchOutcome, Error> {
    search(snapshot, frames, cfg, CandidateMode::Indexed)
}

/// Query by clip comparing against every keyframe; the reference for
/// [`search_by_clip`].
pub fn search_exhaustive(snapshot: &Snapshot, frames: &FrameSeq, cfg: &SearchConfig) -> Result<SearchOutcome, Error> {
    search(snapshot, frames, cfg, CandidateMode::Exhaustive)
}
