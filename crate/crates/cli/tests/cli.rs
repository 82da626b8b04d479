use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clipseek::synth::{diverse_clip, line_path, moving_square_clip, write_clip};

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn catalog(&self) -> PathBuf {
        self.path("catalog")
    }

    fn clip(&self, rel: &str, seed: u64) -> PathBuf {
        let dir = self.path(rel);
        write_clip(&dir, &diverse_clip(seed)).unwrap();
        dir
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_clipseek"))
            .arg("--catalog")
            .arg(self.catalog())
            .args(args)
            .env_remove("CLIPSEEK_CATALOG")
            .output()
            .unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn register_prints_id_and_keyframes() {
    let env = Env::new();
    let frames = env.clip("a", 1);
    let out = env.run(&["register", "--name", "first", "--frames", s(&frames)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let line = stdout(&out);
    assert!(line.starts_with("v_id=1 keyframes="), "{line}");
    assert_eq!(line.lines().count(), 1);

    let out = env.run(&["register", "--name", "second", "--frames", s(&frames)]);
    assert!(stdout(&out).starts_with("v_id=2 "));

    let out = env.run(&["list"]);
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn register_validation_failures_exit_2() {
    let env = Env::new();
    let empty = env.path("empty");
    fs::create_dir_all(&empty).unwrap();
    let frames = env.clip("a", 1);

    for args in [
        vec!["register", "--name", "x", "--frames", s(&empty)],
        vec!["register", "--name", "x", "--frames", "/definitely/not/here"],
        vec!["register", "--name", &"n".repeat(61), "--frames", s(&frames)],
        vec!["register", "--name", "", "--frames", s(&frames)],
        vec!["register", "--name", "x", "--frames", s(&frames), "--threshold", "-1"],
        vec!["register", "--frames", s(&frames)],
    ] {
        let out = env.run(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn corrupt_catalog_is_internal_failure() {
    let env = Env::new();
    fs::create_dir_all(env.catalog()).unwrap();
    fs::write(env.catalog().join("journal.ndjson"), "garbage\n").unwrap();
    let out = env.run(&["list"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("corrupt"));
}

#[test]
fn ingest_lists_keyframes() {
    let env = Env::new();
    let frames = env.path("flat");
    let seq = clipseek::FrameSeq::from_rasters(
        (0..4).map(|i| (format!("f{i}.ppm"), clipseek::RgbRaster::filled(20, 20, [9, 9, 9]).unwrap())),
    );
    write_clip(&frames, &seq).unwrap();
    let out = env.run(&["ingest", "--frames", s(&frames)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "frames=4 keyframes=1\n0\tf0.ppm\n");
}

#[test]
fn search_self_query_and_paired_modes() {
    let env = Env::new();
    let out = env.run(&["search", "--frames", s(&env.clip("q", 3))]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "no results\n");

    for seed in 0..6 {
        let dir = env.clip(&format!("v{seed}"), seed);
        let out = env.run(&["register", "--name", &format!("clip{seed}"), "--frames", s(&dir)]);
        assert_eq!(code(&out), 0);
    }
    let query = env.path("v3");
    let indexed = env.run(&["search", "--frames", s(&query), "--k", "3"]);
    assert_eq!(code(&indexed), 0, "{}", stderr(&indexed));
    let text = stdout(&indexed);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("rank"));
    assert!(lines.len() <= 4);
    let first: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(first, ["1", "4", "clip3", "0.000000"]);
    assert!(stderr(&indexed).contains("retrieval:"));

    let exhaustive = env.run(&["search", "--frames", s(&query), "--k", "3", "--exhaustive"]);
    let ex_first = stdout(&exhaustive).lines().nth(1).unwrap().to_string();
    assert_eq!(ex_first, lines[1]);

    // stdout is stable between runs; timings only go to stderr
    let again = env.run(&["search", "--frames", s(&query), "--k", "3"]);
    assert_eq!(stdout(&again), text);

    let filtered = env.run(&["search", "--frames", s(&query), "--max-distance", "0"]);
    assert_eq!(stdout(&filtered).lines().count(), 2);

    let bad = env.run(&["search", "--frames", s(&env.path("missing"))]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn eval_judgments_reproduce_reference_precision_recall() {
    let env = Env::new();
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/judgments.toml");
    let csv = env.path("out.csv");
    let out = env.run(&["eval", "--queries", s(&manifest), "--csv", s(&csv)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let expected = [
        ("0.80", "0.56"),
        ("1.00", "0.71"),
        ("0.80", "0.63"),
        ("0.89", "0.75"),
        ("0.73", "0.79"),
        ("0.82", "0.92"),
        ("1.00", "0.80"),
        ("0.88", "0.89"),
        ("1.00", "0.70"),
        ("1.00", "0.89"),
    ];
    let csv = fs::read_to_string(csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("query,precision,recall_paper,recall_standard,retrieval_s,matching_s")
    );
    for (line, (p, r)) in lines.zip(expected) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!((cols[1], cols[2]), (p, r), "{line}");
    }
    let text = stdout(&out);
    assert!(text.contains("Precision and recall"));
    assert!(!env.catalog().exists(), "judgment-only eval should not touch the catalog");
}

#[test]
fn eval_manifest_errors_and_empty_manifest() {
    let env = Env::new();
    let empty = env.path("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = env.run(&["eval", "--queries", s(&empty)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let broken = env.path("broken.toml");
    fs::write(&broken, "[[query]]\nframes_dir = 3\n").unwrap();
    assert_eq!(code(&env.run(&["eval", "--queries", s(&broken)])), 2);

    let dir = env.clip("v", 1);
    env.run(&["register", "--name", "v", "--frames", s(&dir)]);
    let unknown = env.path("unknown.toml");
    fs::write(&unknown, "[[query]]\nname = \"q\"\nframes_dir = \"v\"\nrelevant = [1, 77]\n").unwrap();
    let out = env.run(&["eval", "--queries", s(&unknown)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("77"), "{}", stderr(&out));

    let ok = env.path("ok.toml");
    fs::write(&ok, "[[query]]\nframes_dir = \"v\"\nrelevant = [1]\n").unwrap();
    let json = env.path("report.json");
    let out = env.run(&["eval", "--queries", s(&ok), "--json", s(&json)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["queries"][0]["precision"], "1.00");
    assert_eq!(report["queries"][0]["query"], "v");
}

#[test]
fn motion_command() {
    let env = Env::new();
    let sketch = env.path("stroke.json");
    fs::write(&sketch, r#"{"points": [[0.1, 0.5], [0.5, 0.5], [0.9, 0.5]]}"#).unwrap();

    let still = env.path("still");
    let flat = clipseek::FrameSeq::from_rasters(
        (0..5).map(|i| (format!("f{i}.ppm"), clipseek::RgbRaster::filled(30, 30, [90, 20, 200]).unwrap())),
    );
    write_clip(&still, &flat).unwrap();
    env.run(&["register", "--name", "still", "--frames", s(&still)]);
    let out = env.run(&["motion", "--sketch", s(&sketch)]);
    assert_eq!((code(&out), stdout(&out)), (0, "no results\n".to_string()));

    for (name, a, b) in [("down", [0.5, 0.05], [0.5, 0.95]), ("right", [0.05, 0.5], [0.95, 0.5])] {
        let dir = env.path(name);
        write_clip(&dir, &moving_square_clip(&line_path(a, b, 8), 12)).unwrap();
        let out = env.run(&["register", "--name", name, "--frames", s(&dir)]);
        assert_eq!(code(&out), 0);
    }
    let out = env.run(&["motion", "--sketch", s(&sketch)]);
    assert_eq!(code(&out), 0);
    let first: Vec<String> = stdout(&out).lines().nth(1).unwrap().split_whitespace().map(String::from).collect();
    assert_eq!(first[2], "right");
    assert_eq!(first[3], "1.000000");

    let degenerate = env.path("dot.json");
    fs::write(&degenerate, r#"{"points": [[0.2, 0.2]]}"#).unwrap();
    assert_eq!(code(&env.run(&["motion", "--sketch", s(&degenerate)])), 2);
}

#[test]
fn seed_corpus_round_trip() {
    let env = Env::new();
    let out_dir = env.path("corpus");
    let out = env.run(&["seed-corpus", "--out", s(&out_dir), "--register"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("manifest.toml").is_file());
    assert!(out_dir.join("sketches/left-to-right.json").is_file());

    let out = env.run(&["eval", "--queries", s(&out_dir.join("manifest.toml")), "--csv", "-"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("class3"));

    let out = env.run(&["motion", "--sketch", s(&out_dir.join("sketches/top-to-bottom.json")), "--k", "1"]);
    assert!(stdout(&out).contains("top-to-bottom"), "{}", stdout(&out));

    let help = Command::new(env!("CARGO_BIN_EXE_clipseek")).arg("--help").output().unwrap();
    assert!(!stdout(&help).contains("seed-corpus"));
}
