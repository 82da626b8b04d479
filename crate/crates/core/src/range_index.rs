//! Histogram range-finder index.
//!
//! A three-level binary tree over the gray range: (0,255) splits into halves,
//! halves into quarters, quarters into 32-wide blocks. A keyframe descends
//! while the child's share of pixels clears the level threshold and stops at
//! the deepest node reached.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{GrayHistogram, THUMB_PIXELS};
use crate::KeyframeId;

/// Percentage the lower half must exceed at the first split.
pub const HALF_THRESHOLD_PCT: u64 = 55;
/// Percentage a quarter or block must exceed to descend into it.
pub const DEEP_THRESHOLD_PCT: u64 = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("histogram holds {0} pixels, expected {THUMB_PIXELS}")]
    BadPixelCount(u64),
    #[error("keyframe {0} is already indexed")]
    DuplicateKeyframe(KeyframeId),
    #[error("({0},{1}) is not a node of the range tree")]
    InvalidBucket(u8, u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RangeBucket {
    pub min: u8,
    pub max: u8,
}

impl fmt::Display for RangeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.min, self.max)
    }
}

impl RangeBucket {
    pub const ROOT: Self = Self { min: 0, max: 255 };

    /// Validating constructor: only the 15 tree nodes are accepted.
    pub fn new(min: u8, max: u8) -> Result<Self, IndexError> {
        let b = Self { min, max };
        if b.depth().is_some() {
            Ok(b)
        } else {
            Err(IndexError::InvalidBucket(min, max))
        }
    }

    fn width(&self) -> u16 {
        self.max as u16 - self.min as u16 + 1
    }

    /// 0 for the root, 3 for the 32-wide leaves; `None` if not a tree node.
    pub fn depth(&self) -> Option<u8> {
        if self.max < self.min {
            return None;
        }
        let depth = match self.width() {
            256 => 0,
            128 => 1,
            64 => 2,
            32 => 3,
            _ => return None,
        };
        (self.min as u16).is_multiple_of(self.width()).then_some(depth)
    }

    pub fn is_leaf(&self) -> bool {
        self.depth() == Some(3)
    }

    pub fn children(&self) -> Option<[RangeBucket; 2]> {
        if self.is_leaf() {
            return None;
        }
        let half = (self.width() / 2) as u8;
        Some([
            Self { min: self.min, max: self.min + half - 1 },
            Self { min: self.min + half, max: self.max },
        ])
    }

    pub fn parent(&self) -> Option<RangeBucket> {
        if *self == Self::ROOT {
            return None;
        }
        let w = self.width() * 2;
        let min = (self.min as u16 / w * w) as u8;
        Some(Self { min, max: (min as u16 + w - 1) as u8 })
    }

    pub fn contains(&self, other: &RangeBucket) -> bool {
        self.min <= other.min && other.max <= self.max
    }

    /// All 15 nodes, breadth first.
    pub fn all() -> Vec<RangeBucket> {
        let mut out = vec![Self::ROOT];
        let mut i = 0;
        while i < out.len() {
            if let Some(children) = out[i].children() {
                out.extend(children);
            }
            i += 1;
        }
        out
    }
}

/// Descend the range tree for a canonical 900-pixel thumbnail histogram.
pub fn assign_bucket(hist: &GrayHistogram) -> Result<RangeBucket, IndexError> {
    let total = hist.total();
    if total != THUMB_PIXELS as u64 {
        return Err(IndexError::BadPixelCount(total));
    }
    // share > pct%  <=>  100·count > pct·total, all in integers
    let exceeds = |b: &RangeBucket, pct: u64| hist.count_in(b.min, b.max) * 100 > pct * total;

    let [lower, upper] = RangeBucket::ROOT.children().expect("root has children");
    let mut node = if exceeds(&lower, HALF_THRESHOLD_PCT) { lower } else { upper };
    while let Some([lo, hi]) = node.children() {
        node = if exceeds(&lo, DEEP_THRESHOLD_PCT) {
            lo
        } else if exceeds(&hi, DEEP_THRESHOLD_PCT) {
            hi
        } else {
            break;
        };
    }
    Ok(node)
}

/// Bucket → keyframe membership. Each keyframe lives in exactly one bucket.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BucketTable {
    buckets: BTreeMap<RangeBucket, BTreeSet<KeyframeId>>,
    owner: HashMap<KeyframeId, RangeBucket>,
}

impl BucketTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, kf: KeyframeId, bucket: RangeBucket) -> Result<(), IndexError> {
        RangeBucket::new(bucket.min, bucket.max)?;
        if self.owner.contains_key(&kf) {
            return Err(IndexError::DuplicateKeyframe(kf));
        }
        self.owner.insert(kf, bucket);
        self.buckets.entry(bucket).or_default().insert(kf);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn bucket_of(&self, kf: KeyframeId) -> Option<RangeBucket> {
        self.owner.get(&kf).copied()
    }

    pub fn members(&self, bucket: RangeBucket) -> impl Iterator<Item = KeyframeId> + '_ {
        self.buckets.get(&bucket).into_iter().flatten().copied()
    }

    /// Members of `bucket` and of every bucket below it.
    pub fn subtree(&self, bucket: RangeBucket) -> BTreeSet<KeyframeId> {
        self.buckets
            .range(RangeBucket { min: bucket.min, max: 0 }..)
            .take_while(|(b, _)| b.min <= bucket.max)
            .filter(|(b, _)| bucket.contains(b))
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RangeBucket, &BTreeSet<KeyframeId>)> {
        self.buckets.iter().map(|(b, ids)| (*b, ids))
    }

    /// Members of `bucket`, widened to the parent's whole subtree (repeatedly,
    /// up to the root) while fewer than `min_candidates` are found.
    pub fn candidate_set(&self, bucket: RangeBucket, min_candidates: usize) -> BTreeSet<KeyframeId> {
        let mut found: BTreeSet<KeyframeId> = self.members(bucket).collect();
        let mut node = bucket;
        while found.len() < min_candidates {
            match node.parent() {
                Some(parent) => {
                    node = parent;
                    found = self.subtree(node);
                }
                None => return self.subtree(node),
            }
        }
        found
    }
}
