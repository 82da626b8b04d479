//! File-backed record store for videos and keyframes.
//!
//! Layout under the catalog root:
//!
//! ```text
//! meta              format version, `clipseek-catalog/1`
//! journal.ndjson    header line, then one registration per line
//! blobs/<i_id>.pgm  keyframe images (full-resolution grayscale)
//! stats.json        scaling stats of the current records
//! ```
//!
//! A registration is one journal line holding the video record and all of
//! its keyframe records, so it is either wholly present or wholly absent.
//! Blobs are written first; a registration whose journal line never landed
//! leaves only unreferenced blobs, which later registrations overwrite.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::features::{FeatureStrings, KeyframeFeatures};
use crate::keyframe::{FrameSeq, KeyframeError};
use crate::motion::{derive_video_trajectory, Trajectory};
use crate::pipeline::{process_keyframes, PipelineConfig, ProcessedKeyframe};
use crate::range_index::{BucketTable, RangeBucket};
use crate::raster::{encode_pgm, GrayRaster};
use crate::retrieval::{build_vector, FeatureVector, ScalingStats};
use crate::{Error, KeyframeId, VideoId};

pub const FORMAT_VERSION: &str = "clipseek-catalog/1";
pub const VIDEO_NAME_LIMIT: usize = 60;
pub const KEYFRAME_NAME_LIMIT: usize = 40;

const META_FILE: &str = "meta";
const JOURNAL_FILE: &str = "journal.ndjson";
const STATS_FILE: &str = "stats.json";
const BLOB_DIR: &str = "blobs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub v_id: VideoId,
    pub v_name: String,
    pub frame_dir: Option<PathBuf>,
    pub frames: Vec<String>,
    pub keyframe_ids: Vec<KeyframeId>,
    pub trajectory: Option<Trajectory>,
    /// Registration time, ISO-8601 UTC.
    pub dostore: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub i_id: KeyframeId,
    pub i_name: String,
    /// Position of the keyframe in its video's frame list.
    pub frame_index: usize,
    /// Relative to the catalog root.
    pub image_path: String,
    pub min: u8,
    pub max: u8,
    pub sch: String,
    pub glcm: String,
    pub edgedensity: String,
    pub majorregions: u32,
    pub v_id: VideoId,
}

impl KeyframeRecord {
    pub fn bucket(&self) -> Result<RangeBucket, Error> {
        Ok(RangeBucket::new(self.min, self.max)?)
    }

    pub fn feature_strings(&self) -> FeatureStrings {
        FeatureStrings {
            sch: self.sch.clone(),
            glcm: self.glcm.clone(),
            edgedensity: self.edgedensity.clone(),
            majorregions: self.majorregions,
        }
    }

    pub fn features(&self) -> Result<KeyframeFeatures, Error> {
        Ok(KeyframeFeatures::from_strings(&self.feature_strings())?)
    }
}

/// One journal line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Registration {
    video: VideoRecord,
    keyframes: Vec<KeyframeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalHeader {
    format: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub videos: usize,
    pub keyframes: usize,
    pub quarantined: Vec<QuarantinedLine>,
    /// Bytes of an incomplete trailing line removed from the journal.
    pub truncated_tail: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedLine {
    /// 1-based line number in the journal.
    pub line: usize,
    pub reason: String,
}

struct StoredKeyframe {
    record: KeyframeRecord,
    features: KeyframeFeatures,
}

/// Immutable view of the catalog at one point in time.
pub struct Snapshot {
    videos: BTreeMap<VideoId, VideoRecord>,
    keyframes: BTreeMap<KeyframeId, StoredKeyframe>,
    buckets: BucketTable,
    stats: ScalingStats,
    vectors: HashMap<KeyframeId, FeatureVector>,
}

impl Snapshot {
    fn empty() -> Self {
        Self {
            videos: BTreeMap::new(),
            keyframes: BTreeMap::new(),
            buckets: BucketTable::new(),
            stats: ScalingStats::default(),
            vectors: HashMap::new(),
        }
    }

    /// Index a verified registration. Fails without side effects.
    fn check(&self, reg: &Registration) -> Result<Vec<(KeyframeFeatures, RangeBucket)>, String> {
        let v = &reg.video;
        if self.videos.contains_key(&v.v_id) {
            return Err(format!("duplicate video id {}", v.v_id));
        }
        if v.v_name.is_empty() || v.v_name.chars().count() > VIDEO_NAME_LIMIT {
            return Err("video name empty or too long".into());
        }
        let ids: Vec<KeyframeId> = reg.keyframes.iter().map(|k| k.i_id).collect();
        if ids != v.keyframe_ids {
            return Err("keyframe ids do not match video record".into());
        }
        let mut out = Vec::with_capacity(reg.keyframes.len());
        for (n, k) in reg.keyframes.iter().enumerate() {
            if self.keyframes.contains_key(&k.i_id) || ids[..n].contains(&k.i_id) {
                return Err(format!("duplicate keyframe id {}", k.i_id));
            }
            if k.v_id != v.v_id {
                return Err(format!("keyframe {} belongs to video {}", k.i_id, k.v_id));
            }
            if k.i_name.chars().count() > KEYFRAME_NAME_LIMIT {
                return Err(format!("keyframe {} name too long", k.i_id));
            }
            let bucket = k.bucket().map_err(|e| e.to_string())?;
            let features = k.features().map_err(|e| e.to_string())?;
            if features.to_strings().map_err(|e| e.to_string())? != k.feature_strings() {
                return Err(format!("keyframe {} feature strings are not canonical", k.i_id));
            }
            out.push((features, bucket));
        }
        Ok(out)
    }

    fn insert(&mut self, reg: Registration, parsed: Vec<(KeyframeFeatures, RangeBucket)>) {
        for (record, (features, bucket)) in reg.keyframes.into_iter().zip(parsed) {
            self.buckets
                .insert(record.i_id, bucket)
                .expect("checked before insert");
            self.keyframes.insert(record.i_id, StoredKeyframe { record, features });
        }
        self.videos.insert(reg.video.v_id, reg.video);
    }

    fn refresh_vectors(&mut self) {
        self.stats = ScalingStats::from_features(self.keyframes.values().map(|k| &k.features));
        self.vectors = self
            .keyframes
            .iter()
            .map(|(&id, k)| (id, build_vector(&k.features, &self.stats)))
            .collect();
    }

    fn clone_records(&self) -> Self {
        Self {
            videos: self.videos.clone(),
            keyframes: self
                .keyframes
                .iter()
                .map(|(&id, k)| {
                    (
                        id,
                        StoredKeyframe {
                            record: k.record.clone(),
                            features: k.features.clone(),
                        },
                    )
                })
                .collect(),
            buckets: self.buckets.clone(),
            stats: self.stats.clone(),
            vectors: HashMap::new(),
        }
    }

    pub fn get_video(&self, v_id: VideoId) -> Result<&VideoRecord, Error> {
        self.videos.get(&v_id).ok_or(Error::NotFound { kind: "video", id: v_id })
    }

    pub fn get_keyframe(&self, i_id: KeyframeId) -> Result<&KeyframeRecord, Error> {
        self.keyframe(i_id).ok_or(Error::NotFound { kind: "keyframe", id: i_id })
    }

    pub fn keyframe(&self, i_id: KeyframeId) -> Option<&KeyframeRecord> {
        self.keyframes.get(&i_id).map(|k| &k.record)
    }

    pub fn keyframe_features(&self, i_id: KeyframeId) -> Option<&KeyframeFeatures> {
        self.keyframes.get(&i_id).map(|k| &k.features)
    }

    /// Videos in id order.
    pub fn videos(&self) -> impl Iterator<Item = &VideoRecord> {
        self.videos.values()
    }

    pub fn keyframes(&self) -> impl Iterator<Item = &KeyframeRecord> {
        self.keyframes.values().map(|k| &k.record)
    }

    pub fn video_count(&self) -> usize {
        self.videos.len()
    }

    pub fn keyframe_count(&self) -> usize {
        self.keyframes.len()
    }

    pub fn buckets(&self) -> &BucketTable {
        &self.buckets
    }

    pub fn stats(&self) -> &ScalingStats {
        &self.stats
    }

    pub fn vector(&self, i_id: KeyframeId) -> Option<&FeatureVector> {
        self.vectors.get(&i_id)
    }

    fn next_ids(&self) -> (VideoId, KeyframeId) {
        (
            self.videos.keys().next_back().map_or(1, |id| id + 1),
            self.keyframes.keys().next_back().map_or(1, |id| id + 1),
        )
    }
}

/// Simulated crash points for durability tests.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    /// Blobs written, journal untouched.
    AfterBlobs,
    /// Half of the journal line written.
    MidJournalLine,
}

pub struct Catalog {
    root: PathBuf,
    current: RwLock<Arc<Snapshot>>,
    writer: Mutex<()>,
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog").field("root", &self.root).finish_non_exhaustive()
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| {
        if source.kind() == io::ErrorKind::StorageFull {
            Error::StorageFull
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(io_at(&tmp))?;
    f.write_all(bytes).map_err(io_at(&tmp))?;
    f.sync_all().map_err(io_at(&tmp))?;
    fs::rename(&tmp, path).map_err(io_at(path))
}

fn truncate_chars(s: &str, limit: usize) -> String {
    s.chars().take(limit).collect()
}

impl Catalog {
    /// Open (creating if needed) the catalog at `root` and replay its journal.
    pub fn open(root: impl AsRef<Path>) -> Result<(Self, LoadReport), Error> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(BLOB_DIR)).map_err(io_at(&root))?;

        let meta = root.join(META_FILE);
        match fs::read_to_string(&meta) {
            Ok(s) if s.trim() == FORMAT_VERSION => {}
            Ok(s) => return Err(Error::UnsupportedFormat(s.trim().to_string())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                write_atomic(&meta, format!("{FORMAT_VERSION}\n").as_bytes())?;
            }
            Err(e) => return Err(io_at(&meta)(e)),
        }

        let journal = root.join(JOURNAL_FILE);
        if !journal.exists() {
            let header = serde_json::to_string(&JournalHeader {
                format: FORMAT_VERSION.into(),
            })
            .expect("header serializes");
            write_atomic(&journal, format!("{header}\n").as_bytes())?;
        }
        let (snapshot, report) = Self::replay(&root, &journal)?;
        let catalog = Self {
            root,
            current: RwLock::new(Arc::new(snapshot)),
            writer: Mutex::new(()),
        };
        catalog.persist_stats(&catalog.snapshot())?;
        Ok((catalog, report))
    }

    fn replay(root: &Path, journal: &Path) -> Result<(Snapshot, LoadReport), Error> {
        let mut bytes = fs::read(journal).map_err(io_at(journal))?;
        let mut report = LoadReport::default();

        // an unterminated last line is a torn append: drop it from disk
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < bytes.len() {
            report.truncated_tail = bytes.len() - complete;
            report.quarantined.push(QuarantinedLine {
                line: bytes[..complete].iter().filter(|&&b| b == b'\n').count() + 1,
                reason: "incomplete trailing line (interrupted write)".into(),
            });
            bytes.truncate(complete);
            let f = OpenOptions::new().write(true).open(journal).map_err(io_at(journal))?;
            f.set_len(complete as u64).map_err(io_at(journal))?;
            f.sync_all().map_err(io_at(journal))?;
        }

        let text = String::from_utf8_lossy(&bytes);
        let mut lines = text.lines();
        let header: JournalHeader = lines
            .next()
            .and_then(|l| serde_json::from_str(l).ok())
            .ok_or_else(|| Error::CorruptJournal("missing or unreadable header".into()))?;
        if header.format != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(header.format));
        }

        let mut snapshot = Snapshot::empty();
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            if line.trim().is_empty() {
                continue;
            }
            let verdict = serde_json::from_str::<Registration>(line)
                .map_err(|e| format!("unparseable record: {e}"))
                .and_then(|reg| {
                    if let Some(k) = reg.keyframes.iter().find(|k| !root.join(&k.image_path).is_file()) {
                        return Err(format!("keyframe {} image missing", k.i_id));
                    }
                    let parsed = snapshot.check(&reg)?;
                    Ok((reg, parsed))
                });
            match verdict {
                Ok((reg, parsed)) => snapshot.insert(reg, parsed),
                Err(reason) => {
                    log::warn!("quarantining journal line {line_no}: {reason}");
                    report.quarantined.push(QuarantinedLine { line: line_no, reason });
                }
            }
        }
        report.quarantined.sort_by_key(|q| q.line);
        snapshot.refresh_vectors();
        report.videos = snapshot.video_count();
        report.keyframes = snapshot.keyframe_count();
        Ok((snapshot, report))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The current immutable view; later registrations do not affect it.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current.read().expect("snapshot lock poisoned"))
    }

    pub fn blob_path(&self, record: &KeyframeRecord) -> PathBuf {
        self.root.join(&record.image_path)
    }

    pub fn register_video(&self, name: &str, frames: &FrameSeq, cfg: &PipelineConfig) -> Result<VideoRecord, Error> {
        self.register_inner(name, frames, cfg, None)
    }

    #[doc(hidden)]
    pub fn register_video_crashing(
        &self,
        name: &str,
        frames: &FrameSeq,
        cfg: &PipelineConfig,
        crash: CrashPoint,
    ) -> Result<VideoRecord, Error> {
        self.register_inner(name, frames, cfg, Some(crash))
    }

    fn register_inner(
        &self,
        name: &str,
        frames: &FrameSeq,
        cfg: &PipelineConfig,
        crash: Option<CrashPoint>,
    ) -> Result<VideoRecord, Error> {
        if name.is_empty() {
            return Err(Error::EmptyName);
        }
        let name_len = name.chars().count();
        if name_len > VIDEO_NAME_LIMIT {
            return Err(Error::NameTooLong(name_len));
        }
        if frames.is_empty() {
            return Err(KeyframeError::EmptySequence.into());
        }

        let (_, processed) = process_keyframes(frames, cfg)?;
        let thumbs: Vec<&GrayRaster> = processed.iter().map(|p| &p.thumb).collect();
        let trajectory = derive_video_trajectory(&thumbs, &cfg.motion).ok();
        let mut strings = Vec::with_capacity(processed.len());
        for p in &processed {
            strings.push(p.features.to_strings()?);
        }

        let _guard = self.writer.lock().expect("writer lock poisoned");
        let base = self.snapshot();
        let (v_id, first_kf) = base.next_ids();

        let keyframes: Vec<KeyframeRecord> = processed
            .iter()
            .zip(strings)
            .zip(first_kf..)
            .map(|((p, s), i_id): ((&ProcessedKeyframe, FeatureStrings), KeyframeId)| KeyframeRecord {
                i_id,
                i_name: truncate_chars(&p.name, KEYFRAME_NAME_LIMIT),
                frame_index: p.frame_index,
                image_path: format!("{BLOB_DIR}/{i_id}.pgm"),
                min: p.bucket.min,
                max: p.bucket.max,
                sch: s.sch,
                glcm: s.glcm,
                edgedensity: s.edgedensity,
                majorregions: s.majorregions,
                v_id,
            })
            .collect();
        let video = VideoRecord {
            v_id,
            v_name: name.to_string(),
            frame_dir: frames.dir.clone(),
            frames: frames.frames.iter().map(|f| f.name.clone()).collect(),
            keyframe_ids: keyframes.iter().map(|k| k.i_id).collect(),
            trajectory,
            dostore: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        };
        let reg = Registration { video, keyframes };
        let parsed = base.check(&reg).map_err(Error::Invariant)?;

        let written = self.write_blobs(&reg.keyframes, &processed);
        if let Err(e) = written {
            self.remove_blobs(&reg.keyframes);
            return Err(e);
        }
        if crash == Some(CrashPoint::AfterBlobs) {
            return Err(Error::SimulatedCrash);
        }
        if let Err(e) = self.append_journal(&reg, crash) {
            if !matches!(e, Error::SimulatedCrash) {
                self.remove_blobs(&reg.keyframes);
            }
            return Err(e);
        }

        let mut next = base.clone_records();
        let video = reg.video.clone();
        next.insert(reg, parsed);
        next.refresh_vectors();
        let next = Arc::new(next);
        *self.current.write().expect("snapshot lock poisoned") = Arc::clone(&next);
        if let Err(e) = self.persist_stats(&next) {
            log::warn!("could not persist scaling stats: {e}");
        }
        Ok(video)
    }

    fn write_blobs(&self, records: &[KeyframeRecord], processed: &[ProcessedKeyframe]) -> Result<(), Error> {
        for (r, p) in records.iter().zip(processed) {
            write_atomic(&self.blob_path(r), &encode_pgm(&p.gray))?;
        }
        Ok(())
    }

    fn remove_blobs(&self, records: &[KeyframeRecord]) {
        for r in records {
            let _ = fs::remove_file(self.blob_path(r));
        }
    }

    fn append_journal(&self, reg: &Registration, crash: Option<CrashPoint>) -> Result<(), Error> {
        let path = self.root.join(JOURNAL_FILE);
        let mut line = serde_json::to_string(reg).expect("records serialize");
        line.push('\n');
        let mut f = OpenOptions::new().append(true).open(&path).map_err(io_at(&path))?;
        let before = f.metadata().map_err(io_at(&path))?.len();
        if crash == Some(CrashPoint::MidJournalLine) {
            let half = line.len() / 2;
            f.write_all(&line.as_bytes()[..half]).map_err(io_at(&path))?;
            f.sync_all().map_err(io_at(&path))?;
            return Err(Error::SimulatedCrash);
        }
        let result = f.write_all(line.as_bytes()).and_then(|_| f.sync_all());
        if let Err(e) = result {
            // roll back whatever part of the line made it to disk
            let _ = f.set_len(before);
            let _ = f.sync_all();
            return Err(io_at(&path)(e));
        }
        Ok(())
    }

    fn persist_stats(&self, snapshot: &Snapshot) -> Result<(), Error> {
        let path = self.root.join(STATS_FILE);
        let json = serde_json::to_string_pretty(snapshot.stats()).expect("stats serialize");
        if fs::read_to_string(&path).is_ok_and(|s| s == json) {
            return Ok(());
        }
        write_atomic(&path, json.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RgbRaster;

    fn solid_video(rgb: [u8; 3], n: usize) -> FrameSeq {
        FrameSeq::from_rasters((0..n).map(|i| (format!("f{i:03}.ppm"), RgbRaster::filled(16, 12, rgb).unwrap())))
    }

    #[test]
    fn empty_directory_is_empty_catalog() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, report) = Catalog::open(dir.path()).unwrap();
        assert_eq!(report, LoadReport::default());
        assert_eq!(cat.snapshot().video_count(), 0);
        assert_eq!(fs::read_to_string(dir.path().join("meta")).unwrap().trim(), FORMAT_VERSION);
    }

    #[test]
    fn identical_frames_make_one_keyframe() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, _) = Catalog::open(dir.path()).unwrap();
        let v = cat.register_video("flat", &solid_video([10, 200, 30], 5), &PipelineConfig::default()).unwrap();
        assert_eq!(v.keyframe_ids.len(), 1);
        assert_eq!(v.frames.len(), 5);
        assert!(v.trajectory.is_none());
        assert!(dir.path().join("blobs/1.pgm").is_file());
    }

    #[test]
    fn ids_are_monotone_and_listing_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, _) = Catalog::open(dir.path()).unwrap();
        let cfg = PipelineConfig::default();
        let ids: Vec<_> = (0..3)
            .map(|i| cat.register_video(&format!("v{i}"), &solid_video([i * 80, 0, 0], 2), &cfg).unwrap().v_id)
            .collect();
        assert_eq!(ids, [1, 2, 3]);
        let snap = cat.snapshot();
        assert_eq!(snap.videos().map(|v| v.v_id).collect::<Vec<_>>(), [1, 2, 3]);
        assert!(matches!(snap.get_video(9), Err(Error::NotFound { kind: "video", id: 9 })));
        assert!(matches!(snap.get_keyframe(9), Err(Error::NotFound { .. })));
    }

    #[test]
    fn name_validation() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, _) = Catalog::open(dir.path()).unwrap();
        let cfg = PipelineConfig::default();
        assert!(matches!(cat.register_video(&"x".repeat(61), &solid_video([0; 3], 1), &cfg), Err(Error::NameTooLong(61))));
        assert!(matches!(cat.register_video("", &solid_video([0; 3], 1), &cfg), Err(Error::EmptyName)));
        assert!(matches!(
            cat.register_video("ok", &FrameSeq::default(), &cfg),
            Err(Error::Keyframe(KeyframeError::EmptySequence))
        ));
        assert_eq!(cat.snapshot().video_count(), 0);
    }

    #[test]
    fn long_frame_names_are_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, _) = Catalog::open(dir.path()).unwrap();
        let long = format!("{}.ppm", "n".repeat(50));
        let seq = FrameSeq::from_rasters([(long, RgbRaster::filled(4, 4, [1, 2, 3]).unwrap())]);
        let v = cat.register_video("v", &seq, &PipelineConfig::default()).unwrap();
        let kf = cat.snapshot().get_keyframe(v.keyframe_ids[0]).unwrap().clone();
        assert_eq!(kf.i_name.chars().count(), KEYFRAME_NAME_LIMIT);
    }

    #[test]
    fn snapshots_are_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let (cat, _) = Catalog::open(dir.path()).unwrap();
        let before = cat.snapshot();
        cat.register_video("v", &solid_video([5; 3], 1), &PipelineConfig::default()).unwrap();
        assert_eq!(before.video_count(), 0);
        assert_eq!(cat.snapshot().video_count(), 1);
    }

    #[test]
    fn unreadable_header_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(JOURNAL_FILE), "not json\n").unwrap();
        assert!(matches!(Catalog::open(dir.path()), Err(Error::CorruptJournal(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(META_FILE), "clipseek-catalog/99\n").unwrap();
        assert!(matches!(Catalog::open(dir.path()), Err(Error::UnsupportedFormat(_))));
    }
}
