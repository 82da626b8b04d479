//! Motion trajectories and sketch matching.
//!
//! A video's trajectory is the path of the changed-pixel centroid across its
//! keyframes. Trajectories are resampled by arc length, reduced to 8-sector
//! direction codes, and compared by the mean cosine of the angle between
//! corresponding codes.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::GrayRaster;
use crate::VideoId;

/// Number of points a polyline is resampled to before coding.
pub const RESAMPLE_POINTS: usize = 32;
pub const CODE_LEN: usize = RESAMPLE_POINTS - 1;
pub const DEFAULT_DIFF_THRESHOLD: u8 = 30;

/// cos(k·π/4) for k = 0..8, exact at the axis-aligned entries.
const SECTOR_COS: [f64; 8] = [
    1.0,
    FRAC_1_SQRT_2,
    0.0,
    -FRAC_1_SQRT_2,
    -1.0,
    -FRAC_1_SQRT_2,
    0.0,
    FRAC_1_SQRT_2,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("need at least {need} keyframes, got {got}")]
    TooFewKeyframes { need: usize, got: usize },
    #[error("no pixel changes between keyframes")]
    NoMotion,
    #[error("polyline has zero length")]
    DegeneratePolyline,
    #[error("trajectory needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("coordinate {0:?} outside [0,1]")]
    BadCoordinates([f64; 2]),
    #[error("code sequences differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("keyframe dimensions differ")]
    DimensionMismatch,
    #[error("invalid trajectory json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectorySource {
    Sketch,
    #[default]
    Derived,
}

/// Ordered points in image-normalized coordinates, y pointing down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub source: TrajectorySource,
}

impl Trajectory {
    pub fn new(points: Vec<[f64; 2]>, source: TrajectorySource) -> Result<Self, MotionError> {
        if points.len() < 2 {
            return Err(MotionError::TooFewPoints(points.len()));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !p.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c)))
        {
            return Err(MotionError::BadCoordinates(*p));
        }
        Ok(Self { points, source })
    }

    /// Parse a sketch: either `[[x,y],...]` or `{"points": [[x,y],...]}`.
    pub fn from_sketch_json(json: &str) -> Result<Self, MotionError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Bare(Vec<[f64; 2]>),
            Wrapped { points: Vec<[f64; 2]> },
        }
        let points = match serde_json::from_str(json).map_err(|e| MotionError::Json(e.to_string()))? {
            Wire::Bare(p) | Wire::Wrapped { points: p } => p,
        };
        Self::new(points, TrajectorySource::Sketch)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryMode {
    /// One point per keyframe: centroid of pixels differing from the
    /// per-pixel median of all keyframes.
    #[default]
    Background,
    /// One point per consecutive keyframe pair: centroid of pixels that
    /// changed between the two.
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    pub diff_threshold: u8,
    pub mode: TrajectoryMode,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            diff_threshold: DEFAULT_DIFF_THRESHOLD,
            mode: TrajectoryMode::Background,
        }
    }
}

/// Centroid of pixels where `changed(i)` holds, with pixel centres at
/// (x + 0.5) / width.
fn changed_centroid(w: usize, h: usize, changed: impl Fn(usize) -> bool) -> Option<[f64; 2]> {
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
    for i in (0..w * h).filter(|&i| changed(i)) {
        sx += (i % w) as u64;
        sy += (i / w) as u64;
        n += 1;
    }
    (n > 0).then(|| {
        let cx = (sx as f64 / n as f64 + 0.5) / w as f64;
        let cy = (sy as f64 / n as f64 + 0.5) / h as f64;
        [cx, cy]
    })
}

pub fn derive_video_trajectory(
    keyframes: &[&GrayRaster],
    cfg: &MotionConfig,
) -> Result<Trajectory, MotionError> {
    if keyframes.len() < 3 {
        return Err(MotionError::TooFewKeyframes {
            need: 3,
            got: keyframes.len(),
        });
    }
    let (w, h) = keyframes[0].dims();
    if keyframes.iter().any(|k| k.dims() != (w, h)) {
        return Err(MotionError::DimensionMismatch);
    }
    let thr = cfg.diff_threshold;

    let raw: Vec<Option<[f64; 2]>> = match cfg.mode {
        TrajectoryMode::Background => {
            let mut column = vec![0u8; keyframes.len()];
            let background: Vec<u8> = (0..w * h)
                .map(|i| {
                    for (slot, k) in column.iter_mut().zip(keyframes) {
                        *slot = k.pixels()[i];
                    }
                    column.sort_unstable();
                    column[(column.len() - 1) / 2]
                })
                .collect();
            keyframes
                .iter()
                .map(|k| changed_centroid(w, h, |i| k.pixels()[i].abs_diff(background[i]) > thr))
                .collect()
        }
        TrajectoryMode::Pairwise => keyframes
            .windows(2)
            .map(|pair| changed_centroid(w, h, |i| pair[0].pixels()[i].abs_diff(pair[1].pixels()[i]) > thr))
            .collect(),
    };

    // gaps hold the previous point; leading gaps take the first known point
    let first = raw.iter().flatten().next().copied().ok_or(MotionError::NoMotion)?;
    let mut last = first;
    let points = raw
        .into_iter()
        .map(|p| {
            if let Some(p) = p {
                last = p;
            }
            last
        })
        .collect();
    Trajectory::new(points, TrajectorySource::Derived)
}

/// Resample a polyline to `n` points equally spaced by arc length.
pub fn resample(points: &[[f64; 2]], n: usize) -> Result<Vec<[f64; 2]>, MotionError> {
    if points.len() < 2 {
        return Err(MotionError::TooFewPoints(points.len()));
    }
    let seg_len: Vec<f64> = points
        .windows(2)
        .map(|s| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1]))
        .collect();
    let total: f64 = seg_len.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(MotionError::DegeneratePolyline);
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 0..n {
        if i == n - 1 {
            out.push(*points.last().expect("non-empty"));
            break;
        }
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < seg_len.len() && seg_start + seg_len[seg] < target {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let (a, b) = (points[seg], points[seg + 1]);
        let t = if seg_len[seg] > 0.0 {
            ((target - seg_start) / seg_len[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
    }
    Ok(out)
}

/// Direction sector of a displacement: ⌊angle / 45°⌋ with angle in [0, 2π).
#[inline]
pub fn direction_code(dx: f64, dy: f64) -> u8 {
    let angle = dy.atan2(dx).rem_euclid(TAU);
    ((angle / (PI / 4.0)).floor() as u8) % 8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientCodeSeq {
    codes: Vec<u8>,
}

impl GradientCodeSeq {
    pub fn new(codes: Vec<u8>) -> Self {
        assert!(codes.iter().all(|&c| c < 8), "direction codes are 0..8");
        Self { codes }
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Direction codes of an arbitrary polyline (no [0,1] restriction).
pub fn polyline_codes(points: &[[f64; 2]]) -> Result<GradientCodeSeq, MotionError> {
    let pts = resample(points, RESAMPLE_POINTS)?;
    Ok(GradientCodeSeq::new(
        pts.windows(2)
            .map(|s| direction_code(s[1][0] - s[0][0], s[1][1] - s[0][1]))
            .collect(),
    ))
}

pub fn trajectory_gradients(t: &Trajectory) -> Result<GradientCodeSeq, MotionError> {
    polyline_codes(&t.points)
}

/// Mean of cos(45° · code difference) over positions; 1 for identical
/// directions, −1 for opposite.
pub fn gradient_correlation(q: &GradientCodeSeq, v: &GradientCodeSeq) -> Result<f64, MotionError> {
    if q.len() != v.len() {
        return Err(MotionError::LengthMismatch(q.len(), v.len()));
    }
    if q.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = q
        .codes
        .iter()
        .zip(&v.codes)
        .map(|(&a, &b)| SECTOR_COS[((a + 8 - b) % 8) as usize])
        .sum();
    Ok(sum / q.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionHit {
    pub v_id: VideoId,
    pub score: f64,
}

/// Sort by descending score, ties by ascending id.
pub fn sort_hits(hits: &mut [MotionHit]) {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.v_id.cmp(&b.v_id))
    });
}

/// Rank videos by gradient correlation with the query. Videos without a
/// usable trajectory are left out.
pub fn motion_rank<'a, I>(query: &Trajectory, videos: I) -> Result<Vec<MotionHit>, MotionError>
where
    I: IntoIterator<Item = (VideoId, Option<&'a Trajectory>)>,
{
    let q = trajectory_gradients(query)?;
    let mut hits: Vec<MotionHit> = videos
        .into_iter()
        .filter_map(|(v_id, t)| {
            let codes = trajectory_gradients(t?).ok()?;
            let score = gradient_correlation(&q, &codes).ok()?;
            Some(MotionHit { v_id, score })
        })
        .collect();
    sort_hits(&mut hits);
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn traj(points: &[[f64; 2]]) -> Trajectory {
        Trajectory::new(points.to_vec(), TrajectorySource::Sketch).unwrap()
    }

    /// 30×30 black frame with a 5×5 white square at (x, 12).
    fn square_at(x: usize) -> GrayRaster {
        GrayRaster::from_fn(30, 30, |px, py| {
            if (x..x + 5).contains(&px) && (12..17).contains(&py) { 255 } else { 0 }
        })
        .unwrap()
    }

    /// Brute force centroid of the bright pixels.
    fn bright_centroid(img: &GrayRaster) -> [f64; 2] {
        let mut pts = Vec::new();
        for y in 0..30 {
            for x in 0..30 {
                if img.get(x, y) > 128 {
                    pts.push([(x as f64 + 0.5) / 30.0, (y as f64 + 0.5) / 30.0]);
                }
            }
        }
        let n = pts.len() as f64;
        [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
    }

    #[test]
    fn moving_square_centroids() {
        let frames = [square_at(0), square_at(10), square_at(20)];
        let refs: Vec<&GrayRaster> = frames.iter().collect();
        let t = derive_video_trajectory(&refs, &MotionConfig::default()).unwrap();
        assert_eq!(t.points.len(), 3);
        for (p, f) in t.points.iter().zip(&frames) {
            let o = bright_centroid(f);
            assert_relative_eq!(p[0], o[0], max_relative = 1e-12);
            assert_relative_eq!(p[1], o[1], max_relative = 1e-12);
        }
        assert!((t.points[0][0] - 0.08).abs() < 0.005);
        assert!((t.points[1][0] - 0.42).abs() < 0.005);
        assert!((t.points[2][0] - 0.75).abs() < 0.005);
        assert!(t.points.windows(2).all(|w| w[1][0] >= w[0][0]));
    }

    #[test]
    fn pairwise_mode_moves_right() {
        let frames: Vec<GrayRaster> = (0..5).map(|i| square_at(i * 6)).collect();
        let refs: Vec<&GrayRaster> = frames.iter().collect();
        let cfg = MotionConfig { mode: TrajectoryMode::Pairwise, ..Default::default() };
        let t = derive_video_trajectory(&refs, &cfg).unwrap();
        assert_eq!(t.points.len(), 4);
        assert!(t.points.windows(2).all(|w| w[1][0] > w[0][0]));
    }

    #[test]
    fn static_video_has_no_motion() {
        let f = square_at(4);
        let err = derive_video_trajectory(&[&f, &f, &f, &f], &MotionConfig::default()).unwrap_err();
        assert_eq!(err, MotionError::NoMotion);
        assert!(matches!(
            derive_video_trajectory(&[&f, &f], &MotionConfig::default()),
            Err(MotionError::TooFewKeyframes { .. })
        ));
    }

    #[test]
    fn horizontal_stroke_is_all_zero() {
        let codes = trajectory_gradients(&traj(&[[0.1, 0.5], [0.4, 0.5], [0.9, 0.5]])).unwrap();
        assert_eq!(codes.codes(), &[0u8; CODE_LEN]);
    }

    #[test]
    fn downward_stroke_is_all_two() {
        // independent angle arithmetic: atan2(+, 0) = 90° lies in [90°, 135°)
        let deg = (1.0f64).atan2(0.0).to_degrees();
        assert_eq!((deg / 45.0).floor() as u8, 2);
        let codes = trajectory_gradients(&traj(&[[0.3, 0.1], [0.3, 0.9]])).unwrap();
        assert_eq!(codes.codes(), &[2u8; CODE_LEN]);
    }

    #[test]
    fn degenerate_and_invalid() {
        let t = traj(&[[0.2, 0.2], [0.2, 0.2], [0.2, 0.2]]);
        assert_eq!(trajectory_gradients(&t).unwrap_err(), MotionError::DegeneratePolyline);
        assert_eq!(Trajectory::new(vec![[0.1, 0.1]], TrajectorySource::Sketch).unwrap_err(), MotionError::TooFewPoints(1));
        assert!(matches!(Trajectory::new(vec![[0.1, 0.1], [1.5, 0.0]], TrajectorySource::Sketch), Err(MotionError::BadCoordinates(_))));
    }

    #[test]
    fn sketch_json_forms() {
        let a = Trajectory::from_sketch_json("[[0,0],[1,1]]").unwrap();
        let b = Trajectory::from_sketch_json(r#"{"points": [[0,0],[1,1]]}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source, TrajectorySource::Sketch);
        assert!(Trajectory::from_sketch_json("[[0,0]]").is_err());
        assert!(matches!(Trajectory::from_sketch_json("{"), Err(MotionError::Json(_))));
    }

    #[test]
    fn correlation_examples() {
        let zeros = GradientCodeSeq::new(vec![0; CODE_LEN]);
        let ones = GradientCodeSeq::new(vec![1; CODE_LEN]);
        let fours = GradientCodeSeq::new(vec![4; CODE_LEN]);
        assert_eq!(gradient_correlation(&zeros, &zeros).unwrap(), 1.0);
        assert_eq!(gradient_correlation(&zeros, &fours).unwrap(), -1.0);
        assert_relative_eq!(gradient_correlation(&zeros, &ones).unwrap(), (PI / 4.0).cos(), max_relative = 1e-12);
        let short = GradientCodeSeq::new(vec![0; 3]);
        assert_eq!(gradient_correlation(&zeros, &short).unwrap_err(), MotionError::LengthMismatch(31, 3));
    }

    #[test]
    fn sector_table_matches_cos() {
        for (k, &c) in SECTOR_COS.iter().enumerate() {
            assert!((c - (k as f64 * PI / 4.0).cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_orders_and_excludes() {
        let right = traj(&[[0.1, 0.5], [0.9, 0.5]]);
        let diag = traj(&[[0.1, 0.1], [0.9, 0.9]]);
        let left = traj(&[[0.9, 0.5], [0.1, 0.5]]);
        let hits = motion_rank(&right, [(3, Some(&left)), (1, None), (2, Some(&diag)), (9, Some(&right))]).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.v_id).collect();
        assert_eq!(ids, [9, 2, 3]);
        assert_eq!(hits[0].score, 1.0);
        assert!(motion_rank(&right, std::iter::empty()).unwrap().is_empty());
    }

    #[test]
    fn ties_break_by_id() {
        let right = traj(&[[0.1, 0.5], [0.9, 0.5]]);
        let hits = motion_rank(&right, [(5, Some(&right)), (2, Some(&right))]).unwrap();
        assert_eq!(hits.iter().map(|h| h.v_id).collect::<Vec<_>>(), [2, 5]);
    }

    fn polyline() -> impl Strategy<Value = Vec<[f64; 2]>> {
        proptest::collection::vec(proptest::array::uniform2(0.05f64..0.95), 2..8)
            .prop_filter("non-degenerate", |p| p.windows(2).all(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) > 1e-3))
    }

    proptest! {
        #[test]
        fn correlation_symmetric_and_bounded(a in proptest::collection::vec(0u8..8, 31), b in proptest::collection::vec(0u8..8, 31)) {
            let (a, b) = (GradientCodeSeq::new(a), GradientCodeSeq::new(b));
            let ab = gradient_correlation(&a, &b).unwrap();
            prop_assert_eq!(ab, gradient_correlation(&b, &a).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert_eq!(gradient_correlation(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn ranking_invariant_under_monotone_transform(scores in proptest::collection::vec(-1.0f64..1.0, 0..20)) {
            let mut a: Vec<MotionHit> = scores.iter().enumerate().map(|(i, &s)| MotionHit { v_id: i as u64, score: s }).collect();
            let mut b: Vec<MotionHit> = scores.iter().enumerate().map(|(i, &s)| MotionHit { v_id: i as u64, score: (s * 3.0).exp() + 7.0 }).collect();
            sort_hits(&mut a);
            sort_hits(&mut b);
            prop_assert_eq!(a.iter().map(|h| h.v_id).collect::<Vec<_>>(), b.iter().map(|h| h.v_id).collect::<Vec<_>>());
        }

        #[test]
        fn resample_has_fixed_length(p in polyline()) {
            let r = resample(&p, RESAMPLE_POINTS).unwrap();
            prop_assert_eq!(r.len(), RESAMPLE_POINTS);
            prop_assert_eq!(r[0], p[0]);
            prop_assert_eq!(trajectory_gradients(&traj(&p)).unwrap().len(), CODE_LEN);
        }
    }
}
