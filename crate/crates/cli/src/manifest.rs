//! Evaluation manifests.
//!
//! ```toml
//! [[query]]
//! name = "red-clip"
//! frames_dir = "queries/red"      # relative to the manifest
//! relevant = [1, 2, 3]
//!
//! [[judgment]]                    # counts only, no search is run
//! name = "vid1"
//! matched = 4
//! retrieved = 5
//! available = 9
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use clipseek::evalkit::Judgment;
use clipseek::VideoId;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, rename = "query")]
    pub queries: Vec<QueryEntry>,
    #[serde(default, rename = "judgment")]
    pub judgments: Vec<JudgmentEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEntry {
    pub name: Option<String>,
    pub frames_dir: PathBuf,
    pub relevant: BTreeSet<VideoId>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentEntry {
    pub name: String,
    pub matched: u32,
    pub retrieved: u32,
    pub available: u32,
}

impl From<&JudgmentEntry> for Judgment {
    fn from(j: &JudgmentEntry) -> Self {
        Judgment {
            query: j.name.clone(),
            matched: j.matched,
            retrieved: j.retrieved,
            available: j.available,
        }
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut manifest: Manifest = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for q in &mut manifest.queries {
            if q.frames_dir.is_relative() {
                q.frames_dir = base.join(&q.frames_dir);
            }
        }
        Ok(manifest)
    }
}

impl QueryEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.frames_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.frames_dir.display().to_string())
        })
    }
}
