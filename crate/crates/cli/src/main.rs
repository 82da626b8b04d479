use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use clipseek::catalog::Catalog;
use clipseek::evalkit::{run_benchmark, BenchQuery, BenchReport, Judgment, QueryRow};
use clipseek::keyframe::{ingest_frames, FrameSeq, KeyframeError, DEFAULT_THRESHOLD};
use clipseek::motion::{motion_rank, Trajectory};
use clipseek::pipeline::PipelineConfig;
use clipseek::retrieval::{search_by_clip, search_exhaustive, SearchConfig};
use clipseek::synth;
use clipseek::Error;
use clipseek_service::ServiceConfig;

mod manifest;

use manifest::Manifest;

const DEFAULT_CATALOG: &str = "clipseek-catalog";

/// Content-based video retrieval over a local catalog.
///
/// Exit status: 0 success, 2 invalid input, 1 internal failure.
#[derive(Debug, Parser)]
#[command(name = "clipseek", version)]
struct Cli {
    /// Catalog directory.
    #[arg(long, global = true, env = "CLIPSEEK_CATALOG", default_value = DEFAULT_CATALOG)]
    catalog: PathBuf,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decode a frame directory and print the selected keyframes.
    Ingest {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Add a video (a directory of frame images) to the catalog.
    Register {
        #[arg(long)]
        name: String,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Rank catalog videos by similarity to a query clip.
    Search {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Compare against every keyframe instead of the range-index pool.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        max_distance: Option<f64>,
        #[arg(long, default_value_t = 20)]
        min_candidates: usize,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Precision/recall report for a manifest of queries or judgments.
    Eval {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        min_candidates: usize,
        /// Also write the per-query CSV here (`-` for stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write the report as JSON here (`-` for stdout).
        #[arg(long)]
        json: Option<PathBuf>,
        /// Run queries in parallel.
        #[arg(long)]
        parallel: bool,
    },
    /// Rank videos by how well their motion matches a sketched stroke.
    Motion {
        /// JSON file: `{"points": [[x, y], ...]}` with coordinates in [0, 1].
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// List registered videos.
    List,
    /// Serve the HTTP API.
    Serve {
        /// Listen address (default 127.0.0.1:8080).
        #[arg(long, env = "CLIPSEEK_ADDR")]
        addr: Option<std::net::SocketAddr>,
        #[arg(long, env = "CLIPSEEK_CORS_ORIGIN")]
        cors_origin: Option<String>,
        #[arg(long, default_value_t = clipseek_service::DEFAULT_MAX_FRAMES)]
        max_frames: usize,
    },
    /// Write synthetic fixture clips, optionally registering them.
    #[command(hide = true)]
    SeedCorpus {
        #[arg(long)]
        out: PathBuf,
        /// Register the generated videos and write `manifest.toml`.
        #[arg(long)]
        register: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Internal(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Raster(_)
            | Error::Feature(_)
            | Error::Motion(_)
            | Error::Eval(_)
            | Error::EmptyName
            | Error::NameTooLong(_)
            | Error::NotFound { .. } => Failure::Invalid(msg),
            Error::Keyframe(k) => k.into(),
            _ => Failure::Internal(msg),
        }
    }
}

impl From<KeyframeError> for Failure {
    fn from(e: KeyframeError) -> Self {
        // unreadable or missing input directories are the caller's mistake
        Failure::Invalid(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn internal(msg: impl std::fmt::Display) -> Failure {
    Failure::Internal(msg.to_string())
}

fn open_catalog(root: &Path) -> Result<Catalog, Failure> {
    let (catalog, report) = Catalog::open(root)?;
    for q in &report.quarantined {
        log::warn!("journal line {} quarantined: {}", q.line, q.reason);
    }
    Ok(catalog)
}

fn load_frames(dir: &Path) -> Result<FrameSeq, Failure> {
    if !dir.is_dir() {
        return Err(invalid(format!("{} is not a directory", dir.display())));
    }
    let (seq, report) = ingest_frames(dir)?;
    for s in &report.skipped {
        eprintln!("warning: skipped {}: {}", s.name, s.reason);
    }
    Ok(seq)
}

fn pipeline(threshold: f64) -> Result<PipelineConfig, Failure> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(invalid(format!("threshold must be a non-negative number, got {threshold}")));
    }
    Ok(PipelineConfig {
        keyframe_threshold: threshold,
        ..PipelineConfig::default()
    })
}

fn write_output(target: &Path, text: &str) -> Result<(), Failure> {
    if target == Path::new("-") {
        print!("{text}");
        Ok(())
    } else {
        std::fs::write(target, text).map_err(|e| internal(format!("{}: {e}", target.display())))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest { frames, threshold } => {
            let cfg = pipeline(threshold)?;
            let seq = load_frames(&frames)?;
            let selection = seq.extract_keyframes(cfg.keyframe_threshold)?;
            println!("frames={} keyframes={}", seq.len(), selection.len());
            for &i in &selection.indices {
                println!("{i}\t{}", seq.frames[i].name);
            }
        }
        Command::Register { name, frames, threshold } => {
            let cfg = pipeline(threshold)?;
            let seq = load_frames(&frames)?;
            let catalog = open_catalog(&cli.catalog)?;
            let video = catalog.register_video(&name, &seq, &cfg)?;
            println!("v_id={} keyframes={}", video.v_id, video.keyframe_ids.len());
        }
        Command::Search {
            frames,
            k,
            exhaustive,
            max_distance,
            min_candidates,
            threshold,
        } => {
            if k == 0 {
                return Err(invalid("--k must be at least 1"));
            }
            let cfg = SearchConfig {
                k,
                max_distance,
                min_candidates,
                pipeline: pipeline(threshold)?,
                ..SearchConfig::default()
            };
            let seq = load_frames(&frames)?;
            let catalog = open_catalog(&cli.catalog)?;
            let snapshot = catalog.snapshot();
            let outcome = if exhaustive {
                search_exhaustive(&snapshot, &seq, &cfg)?
            } else {
                search_by_clip(&snapshot, &seq, &cfg)?
            };
            let rows: Vec<(u64, &str, f64)> = outcome
                .ranked
                .entries
                .iter()
                .map(|e| Ok((e.v_id, snapshot.get_video(e.v_id)?.v_name.as_str(), e.distance)))
                .collect::<Result<_, Error>>()?;
            print!("{}", render_ranking(&rows, "distance"));
            eprintln!(
                "query keyframes: {}  retrieval: {:.3}s  matching: {:.3}s",
                outcome.query_keyframes,
                outcome.timings.retrieval.as_secs_f64(),
                outcome.timings.matching.as_secs_f64()
            );
        }
        Command::Eval {
            queries,
            k,
            min_candidates,
            csv,
            json,
            parallel,
        } => {
            let manifest = Manifest::load(&queries).map_err(invalid)?;
            let report = evaluate(&cli.catalog, &manifest, k, min_candidates, parallel)?;
            print!("{}", report.render_text());
            if let Some(path) = csv {
                write_output(&path, &report.render_csv())?;
            }
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&report.render_json()).map_err(internal)? + "\n";
                write_output(&path, &text)?;
            }
        }
        Command::Motion { sketch, k } => {
            let text = std::fs::read_to_string(&sketch).map_err(|e| invalid(format!("{}: {e}", sketch.display())))?;
            let query = Trajectory::from_sketch_json(&text).map_err(Error::from)?;
            let catalog = open_catalog(&cli.catalog)?;
            let snapshot = catalog.snapshot();
            let mut hits = motion_rank(&query, snapshot.videos().map(|v| (v.v_id, v.trajectory.as_ref()))).map_err(Error::from)?;
            if let Some(k) = k {
                hits.truncate(k);
            }
            let rows: Vec<(u64, &str, f64)> = hits
                .iter()
                .map(|h| Ok((h.v_id, snapshot.get_video(h.v_id)?.v_name.as_str(), h.score)))
                .collect::<Result<_, Error>>()?;
            print!("{}", render_ranking(&rows, "score"));
        }
        Command::List => {
            let catalog = open_catalog(&cli.catalog)?;
            let snapshot = catalog.snapshot();
            for v in snapshot.videos() {
                println!(
                    "{}\t{}\tkeyframes={}\tframes={}\tmotion={}\t{}",
                    v.v_id,
                    v.v_name,
                    v.keyframe_ids.len(),
                    v.frames.len(),
                    if v.trajectory.is_some() { "yes" } else { "no" },
                    v.dostore
                );
            }
        }
        Command::Serve {
            addr,
            cors_origin,
            max_frames,
        } => {
            let mut config = ServiceConfig::new(&cli.catalog);
            if let Some(addr) = addr {
                config.addr = addr;
            }
            config.cors_origin = cors_origin;
            config.max_frames = max_frames;
            let runtime = tokio::runtime::Runtime::new().map_err(internal)?;
            runtime.block_on(clipseek_service::serve(config)).map_err(internal)?;
        }
        Command::SeedCorpus { out, register } => seed_corpus(&cli.catalog, &out, register)?,
    }
    Ok(())
}

fn render_ranking(rows: &[(u64, &str, f64)], metric: &str) -> String {
    if rows.is_empty() {
        return "no results\n".into();
    }
    let w = rows.iter().map(|r| r.1.chars().count()).max().unwrap_or(0).max(4);
    let mut out = format!("{:>4}  {:>6}  {:<w$}  {metric}\n", "rank", "v_id", "name");
    for (i, (id, name, value)) in rows.iter().enumerate() {
        let _ = writeln!(out, "{:>4}  {:>6}  {:<w$}  {:.6}", i + 1, id, name, value);
    }
    out
}

fn evaluate(
    catalog_root: &Path,
    manifest: &Manifest,
    k: usize,
    min_candidates: usize,
    parallel: bool,
) -> Result<BenchReport, Failure> {
    let mut rows: Vec<QueryRow> = Vec::new();
    if !manifest.queries.is_empty() {
        let catalog = open_catalog(catalog_root)?;
        let snapshot = catalog.snapshot();
        let queries = manifest
            .queries
            .iter()
            .map(|q| {
                Ok(BenchQuery {
                    name: q.display_name(),
                    frames: load_frames(&q.frames_dir)?,
                    relevant: q.relevant.clone(),
                })
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        let cfg = SearchConfig {
            k,
            min_candidates,
            ..SearchConfig::default()
        };
        rows.extend(run_benchmark(&snapshot, &queries, &cfg, parallel)?.rows);
    }
    let judged = BenchReport::from_judgments(manifest.judgments.iter().map(Judgment::from)).map_err(Error::from)?;
    rows.extend(judged.rows);

    let timed: Vec<_> = rows.iter().filter_map(|r| r.timings).collect();
    let mean = |f: fn(&clipseek::retrieval::SearchTimings) -> std::time::Duration| {
        (!timed.is_empty()).then(|| timed.iter().map(f).sum::<std::time::Duration>() / timed.len() as u32)
    };
    Ok(BenchReport {
        mean_retrieval: mean(|t| t.retrieval),
        mean_matching: mean(|t| t.matching),
        rows,
    })
}

fn seed_corpus(catalog_root: &Path, out: &Path, register: bool) -> Result<(), Failure> {
    let started = Instant::now();
    let write = |dir: &Path, seq: &FrameSeq| synth::write_clip(dir, seq).map_err(internal);
    let catalog = if register { Some(open_catalog(catalog_root)?) } else { None };
    let cfg = PipelineConfig::default();
    let mut manifest = String::new();

    let mut classes: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); synth::CLASS_COLORS.len()];
    for (class, members) in classes.iter_mut().enumerate() {
        for i in 0..10u64 {
            let name = format!("class{class}-{i:02}");
            let dir = out.join("classes").join(&name);
            let seq = synth::class_clip(class, i);
            write(&dir, &seq)?;
            if let Some(cat) = &catalog {
                members.insert(cat.register_video(&name, &load_frames(&dir)?, &cfg)?.v_id);
            }
        }
        let qdir = out.join("queries").join(format!("class{class}"));
        write(&qdir, &synth::class_clip(class, 1000 + class as u64))?;
        let ids: Vec<String> = members.iter().map(u64::to_string).collect();
        let _ = writeln!(
            manifest,
            "[[query]]\nname = \"class{class}\"\nframes_dir = \"queries/class{class}\"\nrelevant = [{}]\n",
            ids.join(", ")
        );
    }

    let strokes = [
        ("left-to-right", [0.05, 0.5], [0.95, 0.5]),
        ("right-to-left", [0.95, 0.5], [0.05, 0.5]),
        ("top-to-bottom", [0.5, 0.05], [0.5, 0.95]),
        ("diagonal", [0.05, 0.05], [0.95, 0.95]),
    ];
    for (name, a, b) in strokes {
        let path = synth::line_path(a, b, 10);
        let dir = out.join("motion").join(name);
        write(&dir, &synth::moving_square_clip(&path, 10))?;
        if let Some(cat) = &catalog {
            cat.register_video(name, &load_frames(&dir)?, &cfg)?;
        }
        let sketch = serde_json::json!({ "points": synth::line_path(a, b, 4) });
        let sketch_dir = out.join("sketches");
        std::fs::create_dir_all(&sketch_dir).map_err(internal)?;
        std::fs::write(sketch_dir.join(format!("{name}.json")), sketch.to_string()).map_err(internal)?;
    }

    if register {
        std::fs::write(out.join("manifest.toml"), manifest).map_err(internal)?;
    }
    eprintln!("corpus written to {} in {:.1}s", out.display(), started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(msg) | Failure::Internal(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
