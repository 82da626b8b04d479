//! Precision/recall benchmarking and report rendering.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Snapshot;
use crate::keyframe::FrameSeq;
use crate::retrieval::{search_by_clip, SearchConfig, SearchTimings};
use crate::VideoId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("query `{0}` retrieved nothing, precision is undefined")]
    NoRetrievals(String),
    #[error("query `{0}` has no relevant videos, recall is undefined")]
    NoRelevantVideos(String),
    #[error("query `{query}`: matched count {matched} exceeds retrieved or available")]
    InconsistentCounts { query: String, matched: u32 },
    #[error("query `{query}` names unknown video {v_id}")]
    UnknownVideo { query: String, v_id: VideoId },
}

/// Relevance counts for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query: String,
    /// Retrieved videos that are relevant.
    pub matched: u32,
    /// Videos returned.
    pub retrieved: u32,
    /// Relevant videos in the catalog.
    pub available: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecallMode {
    /// `min(1, retrieved / available)`, reported as `recall_paper`.
    #[default]
    Coverage,
    /// `matched / available`.
    Standard,
}

/// An exact non-negative fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u32,
    pub den: u32,
}

impl Ratio {
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Value in hundredths, rounded half up on the exact fraction.
    pub fn hundredths(self) -> u64 {
        let (n, d) = (self.num as u64, self.den as u64);
        (200 * n + d) / (2 * d)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.hundredths();
        write!(f, "{}.{:02}", h / 100, h % 100)
    }
}

impl Judgment {
    fn validate(&self) -> Result<(), EvalError> {
        if self.retrieved == 0 {
            return Err(EvalError::NoRetrievals(self.query.clone()));
        }
        if self.available == 0 {
            return Err(EvalError::NoRelevantVideos(self.query.clone()));
        }
        if self.matched > self.retrieved || self.matched > self.available {
            return Err(EvalError::InconsistentCounts {
                query: self.query.clone(),
                matched: self.matched,
            });
        }
        Ok(())
    }

    pub fn precision(&self) -> Result<Ratio, EvalError> {
        self.validate()?;
        Ok(Ratio {
            num: self.matched,
            den: self.retrieved,
        })
    }

    pub fn recall(&self, mode: RecallMode) -> Result<Ratio, EvalError> {
        self.validate()?;
        let num = match mode {
            RecallMode::Coverage => self.retrieved.min(self.available),
            RecallMode::Standard => self.matched,
        };
        Ok(Ratio {
            num,
            den: self.available,
        })
    }
}

/// A clip query with its ground truth.
#[derive(Debug, Clone)]
pub struct BenchQuery {
    pub name: String,
    pub frames: FrameSeq,
    pub relevant: BTreeSet<VideoId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub judgment: Judgment,
    pub precision: Ratio,
    pub recall_paper: Ratio,
    pub recall_standard: Ratio,
    pub retrieved_ids: Vec<VideoId>,
    pub timings: Option<SearchTimings>,
}

impl QueryRow {
    pub fn from_judgment(judgment: Judgment) -> Result<Self, EvalError> {
        Ok(Self {
            precision: judgment.precision()?,
            recall_paper: judgment.recall(RecallMode::Coverage)?,
            recall_standard: judgment.recall(RecallMode::Standard)?,
            judgment,
            retrieved_ids: Vec::new(),
            timings: None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<QueryRow>,
    pub mean_retrieval: Option<Duration>,
    pub mean_matching: Option<Duration>,
}

impl BenchReport {
    pub fn from_judgments(judgments: impl IntoIterator<Item = Judgment>) -> Result<Self, EvalError> {
        let rows = judgments
            .into_iter()
            .map(QueryRow::from_judgment)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_rows(rows))
    }

    fn from_rows(rows: Vec<QueryRow>) -> Self {
        let timed: Vec<SearchTimings> = rows.iter().filter_map(|r| r.timings).collect();
        let mean = |f: fn(&SearchTimings) -> Duration| {
            (!timed.is_empty()).then(|| timed.iter().map(f).sum::<Duration>() / timed.len() as u32)
        };
        Self {
            mean_retrieval: mean(|t| t.retrieval),
            mean_matching: mean(|t| t.matching),
            rows,
        }
    }

    pub fn mean_precision(&self) -> Option<f64> {
        (!self.rows.is_empty())
            .then(|| self.rows.iter().map(|r| r.precision.value()).sum::<f64>() / self.rows.len() as f64)
    }

    /// Plain-text report: judgment counts, timings and precision/recall.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let w = self.rows.iter().map(|r| r.judgment.query.len()).max().unwrap_or(0).max(5);

        let _ = writeln!(out, "Retrieval counts");
        let _ = writeln!(out, "{:<w$}  {:>7}  {:>9}  {:>9}", "query", "matched", "retrieved", "available");
        for r in &self.rows {
            let j = &r.judgment;
            let _ = writeln!(out, "{:<w$}  {:>7}  {:>9}  {:>9}", j.query, j.matched, j.retrieved, j.available);
        }

        if self.rows.iter().any(|r| r.timings.is_some()) {
            let _ = writeln!(out, "\nTimings (seconds)");
            let _ = writeln!(out, "{:<w$}  {:>9}  {:>9}", "query", "retrieval", "matching");
            for r in &self.rows {
                if let Some(t) = r.timings {
                    let _ = writeln!(
                        out,
                        "{:<w$}  {:>9.3}  {:>9.3}",
                        r.judgment.query,
                        t.retrieval.as_secs_f64(),
                        t.matching.as_secs_f64()
                    );
                }
            }
            if let (Some(a), Some(b)) = (self.mean_retrieval, self.mean_matching) {
                let _ = writeln!(out, "{:<w$}  {:>9.3}  {:>9.3}", "mean", a.as_secs_f64(), b.as_secs_f64());
            }
        }

        let _ = writeln!(out, "\nPrecision and recall");
        let _ = writeln!(
            out,
            "{:<w$}  {:>9}  {:>6}  {:>15}",
            "query", "precision", "recall", "recall(matched)"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:>9}  {:>6}  {:>15}",
                r.judgment.query, r.precision, r.recall_paper, r.recall_standard
            );
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("query,precision,recall_paper,recall_standard,retrieval_s,matching_s\n");
        for r in &self.rows {
            let (ret, mat) = r.timings.map_or((String::new(), String::new()), |t| {
                (
                    format!("{:.6}", t.retrieval.as_secs_f64()),
                    format!("{:.6}", t.matching.as_secs_f64()),
                )
            });
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.judgment.query),
                r.precision,
                r.recall_paper,
                r.recall_standard,
                ret,
                mat
            );
        }
        out
    }

    pub fn render_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "query": r.judgment.query,
                    "matched": r.judgment.matched,
                    "retrieved": r.judgment.retrieved,
                    "available": r.judgment.available,
                    "precision": r.precision.to_string(),
                    "recall_paper": r.recall_paper.to_string(),
                    "recall_standard": r.recall_standard.to_string(),
                    "retrieved_ids": r.retrieved_ids,
                    "retrieval_s": r.timings.map(|t| t.retrieval.as_secs_f64()),
                    "matching_s": r.timings.map(|t| t.matching.as_secs_f64()),
                })
            })
            .collect();
        serde_json::json!({
            "queries": rows,
            "mean_retrieval_s": self.mean_retrieval.map(|d| d.as_secs_f64()),
            "mean_matching_s": self.mean_matching.map(|d| d.as_secs_f64()),
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Run each query against the snapshot and judge the results against its
/// relevant set.
pub fn run_benchmark(
    snapshot: &Snapshot,
    queries: &[BenchQuery],
    cfg: &SearchConfig,
    parallel: bool,
) -> Result<BenchReport, crate::Error> {
    for q in queries {
        if q.relevant.is_empty() {
            return Err(EvalError::NoRelevantVideos(q.name.clone()).into());
        }
        if let Some(&v_id) = q.relevant.iter().find(|&&id| snapshot.get_video(id).is_err()) {
            return Err(EvalError::UnknownVideo {
                query: q.name.clone(),
                v_id,
            }
            .into());
        }
    }
    let run = |q: &BenchQuery| -> Result<QueryRow, crate::Error> {
        let outcome = search_by_clip(snapshot, &q.frames, cfg)?;
        let ids: Vec<VideoId> = outcome.ranked.entries.iter().map(|e| e.v_id).collect();
        let judgment = Judgment {
            query: q.name.clone(),
            matched: ids.iter().filter(|id| q.relevant.contains(id)).count() as u32,
            retrieved: ids.len() as u32,
            available: q.relevant.len() as u32,
        };
        let mut row = QueryRow::from_judgment(judgment)?;
        row.retrieved_ids = ids;
        row.timings = Some(outcome.timings);
        Ok(row)
    };
    let rows = if parallel {
        queries.par_iter().map(run).collect::<Result<Vec<_>, _>>()?
    } else {
        queries.iter().map(run).collect::<Result<Vec<_>, _>>()?
    };
    Ok(BenchReport::from_rows(rows))
}
