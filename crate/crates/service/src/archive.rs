//! Unpacking uploaded frame archives (zip or tar) into a flat directory.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use clipseek::keyframe::FRAME_EXTENSIONS;

use crate::error::{ApiError, ErrorCode};

fn frame_file_name(entry_path: &str) -> Option<String> {
    let name = Path::new(entry_path).file_name()?.to_str()?;
    if name.starts_with('.') {
        return None;
    }
    let ext = Path::new(name).extension()?.to_str()?.to_ascii_lowercase();
    FRAME_EXTENSIONS.contains(&ext.as_str()).then(|| name.to_string())
}

struct Sink<'a> {
    dest: &'a Path,
    max_frames: usize,
    written: usize,
}

impl Sink<'_> {
    /// Entries are flattened to their file name; later duplicates win.
    fn put(&mut self, entry_path: &str, reader: &mut dyn Read) -> Result<(), ApiError> {
        let Some(name) = frame_file_name(entry_path) else {
            return Ok(());
        };
        if self.written == self.max_frames {
            return Err(ApiError::new(
                ErrorCode::TooManyFrames,
                format!("archive holds more than {} frames", self.max_frames),
            ));
        }
        let mut bytes = Vec::new();
        reader
            .read_to_end(&mut bytes)
            .map_err(|e| ApiError::new(ErrorCode::BadArchive, format!("{entry_path}: {e}")))?;
        fs::write(self.dest.join(name), bytes).map_err(ApiError::internal)?;
        self.written += 1;
        Ok(())
    }
}

/// Write every frame image in `bytes` into `dest`; returns how many.
pub fn unpack_frames(bytes: &[u8], dest: &Path, max_frames: usize) -> Result<usize, ApiError> {
    if bytes.is_empty() {
        return Err(ApiError::new(ErrorCode::EmptyArchive, "archive is empty"));
    }
    let mut sink = Sink {
        dest,
        max_frames,
        written: 0,
    };
    let bad = |e: &dyn std::fmt::Display| ApiError::new(ErrorCode::BadArchive, format!("unreadable archive: {e}"));

    if bytes.starts_with(b"PK") {
        let mut zip = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| bad(&e))?;
        for i in 0..zip.len() {
            let mut entry = zip.by_index(i).map_err(|e| bad(&e))?;
            if entry.is_file() {
                let name = entry.name().to_string();
                sink.put(&name, &mut entry)?;
            }
        }
    } else if (bytes.len() >= 512 && &bytes[257..262] == b"ustar") || looks_like_old_tar(bytes) {
        let mut tar = tar::Archive::new(Cursor::new(bytes));
        for entry in tar.entries().map_err(|e| bad(&e))? {
            let mut entry = entry.map_err(|e| bad(&e))?;
            if entry.header().entry_type().is_file() {
                let name = entry.path().map_err(|e| bad(&e))?.to_string_lossy().into_owned();
                sink.put(&name, &mut entry)?;
            }
        }
    } else {
        return Err(ApiError::new(ErrorCode::BadArchive, "archive must be zip or tar"));
    }

    if sink.written == 0 {
        return Err(ApiError::new(ErrorCode::EmptyArchive, "archive contains no frame images"));
    }
    Ok(sink.written)
}

/// Pre-POSIX tar has no magic; accept it when the header checksum is right.
fn looks_like_old_tar(bytes: &[u8]) -> bool {
    if bytes.len() < 512 {
        return false;
    }
    let header = &bytes[..512];
    let stored = std::str::from_utf8(&header[148..156])
        .ok()
        .map(|s| s.trim_matches(|c: char| c == '\0' || c == ' '))
        .and_then(|s| u32::from_str_radix(s, 8).ok());
    let computed: u32 = header
        .iter()
        .enumerate()
        .map(|(i, &b)| if (148..156).contains(&i) { b' ' as u32 } else { b as u32 })
        .sum();
    stored == Some(computed)
}
