use std::fs;
use std::io::Write;

use clipseek::catalog::{Catalog, CrashPoint};
use clipseek::keyframe::{ingest_frames, KeyframeError};
use clipseek::pipeline::PipelineConfig;
use clipseek::raster::decode_frame;
use clipseek::synth::{diverse_clip, write_clip};
use clipseek::Error;

#[test]
fn registration_from_directory_persists_blobs_and_frame_dir() {
    let frames = tempfile::tempdir().unwrap();
    write_clip(frames.path(), &diverse_clip(3)).unwrap();
    let root = tempfile::tempdir().unwrap();
    let (cat, _) = Catalog::open(root.path()).unwrap();

    let (seq, report) = ingest_frames(frames.path()).unwrap();
    assert!(report.skipped.is_empty());
    let v = cat.register_video("from-disk", &seq, &PipelineConfig::default()).unwrap();
    assert_eq!(v.frame_dir.as_deref(), Some(frames.path()));
    assert_eq!(v.frames.len(), seq.len());

    let snap = cat.snapshot();
    for &id in &v.keyframe_ids {
        let kf = snap.get_keyframe(id).unwrap();
        assert_eq!(kf.v_id, v.v_id);
        let blob = fs::read(cat.blob_path(kf)).unwrap();
        let img = decode_frame(&blob).unwrap();
        assert_eq!((img.width(), img.height()), (64, 48));
        assert!(kf.min <= kf.max);
    }
    assert!(root.path().join("stats.json").is_file());
    assert!(v.dostore.ends_with('Z'));
}

#[test]
fn corrupt_frames_are_skipped_not_fatal() {
    let frames = tempfile::tempdir().unwrap();
    write_clip(frames.path(), &diverse_clip(4)).unwrap();
    fs::write(frames.path().join("frame_0001.ppm"), b"P6\n64 48\n255\nshort").unwrap();
    fs::write(frames.path().join("notes.txt"), b"ignored").unwrap();
    let (seq, report) = ingest_frames(frames.path()).unwrap();
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.skipped[0].name, "frame_0001.ppm");
    assert!(seq.frames.iter().all(|f| f.name != "frame_0001.ppm"));
}

#[test]
fn directory_of_garbage_has_no_decodable_frames() {
    let frames = tempfile::tempdir().unwrap();
    fs::write(frames.path().join("a.ppm"), b"junk").unwrap();
    assert!(matches!(ingest_frames(frames.path()), Err(KeyframeError::NoDecodableFrames(1))));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(ingest_frames(empty.path()), Err(KeyframeError::EmptyDirectory(_))));
}

#[test]
fn torn_tail_is_truncated_and_reported() {
    let root = tempfile::tempdir().unwrap();
    {
        let (cat, _) = Catalog::open(root.path()).unwrap();
        cat.register_video("kept", &diverse_clip(1), &PipelineConfig::default()).unwrap();
    }
    let journal = root.path().join("journal.ndjson");
    let intact = fs::read(&journal).unwrap();
    let torn = b"{\"video\":{\"v_id\":2";
    fs::OpenOptions::new().append(true).open(&journal).unwrap().write_all(torn).unwrap();

    let (cat, report) = Catalog::open(root.path()).unwrap();
    assert_eq!(report.videos, 1);
    assert_eq!(report.quarantined.len(), 1);
    assert_eq!(report.truncated_tail, torn.len());
    assert_eq!(fs::read(&journal).unwrap(), intact);
    assert_eq!(cat.snapshot().video_count(), 1);
}

#[test]
fn complete_but_invalid_line_is_quarantined() {
    let root = tempfile::tempdir().unwrap();
    {
        let (cat, _) = Catalog::open(root.path()).unwrap();
        cat.register_video("a", &diverse_clip(1), &PipelineConfig::default()).unwrap();
        cat.register_video("b", &diverse_clip(2), &PipelineConfig::default()).unwrap();
    }
    let journal = root.path().join("journal.ndjson");
    let text = fs::read_to_string(&journal).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replacen("\"sch\":\"SCH 64", "\"sch\":\"SCH 63", 1);
    fs::write(&journal, lines.join("\n") + "\n").unwrap();

    let (cat, report) = Catalog::open(root.path()).unwrap();
    assert_eq!(report.quarantined.len(), 1);
    assert_eq!(report.quarantined[0].line, 2);
    let snap = cat.snapshot();
    assert_eq!(snap.videos().map(|v| v.v_name.as_str()).collect::<Vec<_>>(), ["b"]);
}

#[test]
fn missing_blob_quarantines_its_registration() {
    let root = tempfile::tempdir().unwrap();
    let first_kf = {
        let (cat, _) = Catalog::open(root.path()).unwrap();
        let v = cat.register_video("a", &diverse_clip(1), &PipelineConfig::default()).unwrap();
        v.keyframe_ids[0]
    };
    fs::remove_file(root.path().join(format!("blobs/{first_kf}.pgm"))).unwrap();
    let (cat, report) = Catalog::open(root.path()).unwrap();
    assert_eq!(cat.snapshot().video_count(), 0);
    assert!(report.quarantined[0].reason.contains("image missing"));
}

#[test]
fn crash_then_retry_reuses_ids_cleanly() {
    let root = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    {
        let (cat, _) = Catalog::open(root.path()).unwrap();
        cat.register_video("a", &diverse_clip(1), &cfg).unwrap();
        let err = cat
            .register_video_crashing("b", &diverse_clip(2), &cfg, CrashPoint::MidJournalLine)
            .unwrap_err();
        assert!(matches!(err, Error::SimulatedCrash));
        // the in-memory view never saw the half-written registration
        assert_eq!(cat.snapshot().video_count(), 1);
    }
    let (cat, report) = Catalog::open(root.path()).unwrap();
    assert!(report.truncated_tail > 0);
    let b = cat.register_video("b", &diverse_clip(2), &cfg).unwrap();
    assert_eq!(b.v_id, 2);
    let (again, report) = Catalog::open(root.path()).unwrap();
    assert!(report.quarantined.is_empty());
    assert_eq!(again.snapshot().video_count(), 2);
}

#[test]
fn stats_track_registrations() {
    let root = tempfile::tempdir().unwrap();
    let (cat, _) = Catalog::open(root.path()).unwrap();
    assert_eq!(cat.snapshot().stats().keyframes, 0);
    let v = cat.register_video("a", &diverse_clip(5), &PipelineConfig::default()).unwrap();
    let snap = cat.snapshot();
    assert_eq!(snap.stats().keyframes, v.keyframe_ids.len());
    let on_disk: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.path().join("stats.json")).unwrap()).unwrap();
    assert_eq!(on_disk["keyframes"], v.keyframe_ids.len());
}
