//! Input discovery and small file helpers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use songsieve_core::annotations::{load_annotations_csv, Annotation};
use songsieve_core::audio::{load_wav, source_id_for};
use songsieve_core::detect::{ingest_detections, Detection, YoloIngest};
use walkdir::WalkDir;

use crate::error::{AtPath, CliError, CliResult};

/// A discovered input file and its path relative to the search root.
#[derive(Debug, Clone)]
pub struct Found {
    pub path: PathBuf,
    pub relative: PathBuf,
}

impl Found {
    pub fn source_id(&self) -> String {
        source_id_for(&self.path)
    }
}

pub fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::invalid(format!("{what} {} does not exist", path.display())))
    }
}

/// Pick the flag value, then the config value, else fail with `what`.
pub fn pick(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::invalid(format!("no {what} given (flag or config)")))
}

/// Files with one of `extensions` under `root`, sorted by path. A file
/// root yields just that file.
pub fn find_files(root: &Path, extensions: &[&str]) -> CliResult<Vec<Found>> {
    require(root, "input")?;
    let matches = |p: &Path| {
        p.extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .is_some_and(|e| extensions.contains(&e.as_str()))
    };
    if root.is_file() {
        let name = root.file_name().map(PathBuf::from).unwrap_or_default();
        return Ok(vec![Found {
            path: root.to_path_buf(),
            relative: name,
        }]);
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::data(format!("walking {}: {e}", root.display())))?;
        if entry.file_type().is_file() && matches(entry.path()) {
            let relative = entry.path().strip_prefix(root).unwrap_or(entry.path()).to_path_buf();
            out.push(Found {
                path: entry.path().to_path_buf(),
                relative,
            });
        }
    }
    Ok(out)
}

pub fn load_gt(path: &Path) -> CliResult<Vec<Annotation>> {
    require(path, "ground-truth file")?;
    load_annotations_csv(path).at(path)
}

/// Detections from a file or every `.csv`/`.txt` below a directory.
pub fn load_detections(path: &Path, yolo: Option<&YoloIngest>) -> CliResult<Vec<Detection>> {
    require(path, "detections")?;
    let mut out = Vec::new();
    for f in find_files(path, &["csv", "txt"])? {
        let opts = yolo.map(|y| YoloIngest {
            source_id: f.source_id(),
            ..y.clone()
        });
        out.extend(ingest_detections(&f.path, opts.as_ref()).at(&f.path)?);
    }
    Ok(out)
}

/// Duration of every WAV below `audio_root`, keyed by source id.
pub fn audio_durations(audio_root: &Path) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for f in find_files(audio_root, &["wav"])? {
        let clip = load_wav(&f.path).at(&f.path)?;
        out.insert(f.source_id(), clip.duration_s());
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).at(path)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    write_text(path, &json)
}
