//! Expert annotations: Audacity label-track parsing, class-scheme remapping,
//! the interchange CSV and normalized YOLO box files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Length of every recording in the pipeline, in seconds.
pub const CLIP_DURATION_S: f64 = 60.0;

pub const BIRD_LABEL: &str = "Bird";
pub const NO_BIRD_LABEL: &str = "No Bird";

/// Coarse labels that never enter the species classifier's class set.
pub const CLASSIFIER_EXCLUDED: [&str; 4] = ["Alaudidae", "Bird", "Fringillidae", "Upupa epops"];

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: frequency row without a preceding label row")]
    DanglingFrequencyRow { line: usize },
    #[error("label {0:?} is neither kept, remapped nor dropped by the scheme")]
    UnknownLabel(String),
    #[error("invalid label scheme: {0}")]
    InvalidScheme(String),
    #[error("annotation [{start_s}, {end_s}] s lies outside [0, {duration_s}] s")]
    OutOfRange {
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("line {line}: coordinate {value} outside [0, 1]")]
    CoordinateOutOfRange { line: usize, value: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A ground-truth vocalization event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub source_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub fmin_hz: Option<f64>,
    pub fmax_hz: Option<f64>,
    pub label: String,
}

impl Annotation {
    pub fn new(source_id: impl Into<String>, start_s: f64, end_s: f64, label: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            start_s,
            end_s,
            fmin_hz: None,
            fmax_hz: None,
            label: label.into(),
        }
    }

    pub fn with_band(mut self, fmin_hz: f64, fmax_hz: f64) -> Self {
        self.fmin_hz = Some(fmin_hz);
        self.fmax_hz = Some(fmax_hz);
        self
    }

    pub fn span(&self) -> (f64, f64) {
        (self.start_s, self.end_s)
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

fn parse_seconds(field: &str, line: usize, what: &str) -> Result<f64, AnnotationError> {
    let v: f64 = field.trim().parse().map_err(|_| AnnotationError::MalformedRow {
        line,
        reason: format!("{what} {field:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(AnnotationError::MalformedRow {
            line,
            reason: format!("{what} {field:?} is not finite"),
        });
    }
    Ok(v)
}

/// Parse an Audacity label-track export.
///
/// Each label row is `start<TAB>end<TAB>label`. A spectral selection follows
/// its label as `\<TAB>fmin<TAB>fmax`; negative frequencies (Audacity's
/// "undefined") leave the band unset.
pub fn parse_audacity_labels(text: &str, source_id: &str) -> Result<Vec<Annotation>, AnnotationError> {
    let mut out: Vec<Annotation> = Vec::new();
    // whether the last annotation may still receive a frequency row
    let mut open = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.strip_suffix('\r').unwrap_or(raw);
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split('\t').collect();
        if cols[0].trim() == "\\" {
            if !open {
                return Err(AnnotationError::DanglingFrequencyRow { line });
            }
            if cols.len() != 3 {
                return Err(AnnotationError::MalformedRow {
                    line,
                    reason: format!("frequency row has {} columns, expected 3", cols.len()),
                });
            }
            let fmin = parse_seconds(cols[1], line, "fmin")?;
            let fmax = parse_seconds(cols[2], line, "fmax")?;
            open = false;
            if fmin < 0.0 || fmax < 0.0 {
                continue;
            }
            if fmin >= fmax {
                return Err(AnnotationError::MalformedRow {
                    line,
                    reason: format!("fmin {fmin} >= fmax {fmax}"),
                });
            }
            let last = out.last_mut().expect("open implies a previous annotation");
            last.fmin_hz = Some(fmin);
            last.fmax_hz = Some(fmax);
            continue;
        }
        if cols.len() != 3 {
            return Err(AnnotationError::MalformedRow {
                line,
                reason: format!("label row has {} columns, expected 3", cols.len()),
            });
        }
        let start = parse_seconds(cols[0], line, "start")?;
        let end = parse_seconds(cols[1], line, "end")?;
        if start < 0.0 || start >= end {
            return Err(AnnotationError::MalformedRow {
                line,
                reason: format!("need 0 <= start < end, got {start} / {end}"),
            });
        }
        out.push(Annotation::new(source_id, start, end, cols[2].trim()));
        open = true;
    }
    Ok(out)
}

/// Whether a scheme produces the binary detector classes or species classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeMode {
    Binary,
    Classifier,
}

/// Mapping from raw expert labels onto the classes a model is trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub mode: SchemeMode,
    pub keep: BTreeSet<String>,
    pub remap: BTreeMap<String, String>,
    pub dropped: BTreeSet<String>,
}

impl LabelScheme {
    /// Single-class detector scheme: everything except "No Bird" becomes "Bird".
    pub fn binary() -> Self {
        Self {
            mode: SchemeMode::Binary,
            keep: BTreeSet::from([BIRD_LABEL.to_string()]),
            remap: BTreeMap::new(),
            dropped: [NO_BIRD_LABEL, "No bird"].map(String::from).into(),
        }
    }

    /// Species scheme over `classes`. Coarse taxa and "No Bird" are dropped.
    pub fn classifier<I, S>(classes: I) -> Result<Self, AnnotationError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut dropped: BTreeSet<String> = CLASSIFIER_EXCLUDED.map(String::from).into();
        dropped.insert(NO_BIRD_LABEL.to_string());
        dropped.insert("No bird".to_string());
        let scheme = Self {
            mode: SchemeMode::Classifier,
            keep: classes.into_iter().map(Into::into).collect(),
            remap: BTreeMap::new(),
            dropped,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn with_remap(mut self, raw: impl Into<String>, to: impl Into<String>) -> Result<Self, AnnotationError> {
        self.remap.insert(raw.into(), to.into());
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        let bad = |m: String| Err(AnnotationError::InvalidScheme(m));
        if self.keep.is_empty() {
            return bad("no classes to keep".into());
        }
        if let Some(c) = self.keep.intersection(&self.dropped).next() {
            return bad(format!("{c:?} is both kept and dropped"));
        }
        if let Some((raw, to)) = self.remap.iter().find(|(_, to)| !self.keep.contains(*to)) {
            return bad(format!("{raw:?} remaps to {to:?}, which is not a kept class"));
        }
        match self.mode {
            SchemeMode::Binary => {
                if self.keep.len() != 1 || !self.keep.contains(BIRD_LABEL) {
                    return bad("binary scheme must keep exactly {\"Bird\"}".into());
                }
            }
            SchemeMode::Classifier => {
                if let Some(m) = CLASSIFIER_EXCLUDED.iter().find(|c| !self.dropped.contains(**c)) {
                    return bad(format!("classifier scheme must drop {m:?}"));
                }
            }
        }
        Ok(())
    }

    /// Scheme label for a raw label; `None` when the label is dropped.
    pub fn map_label(&self, raw: &str) -> Result<Option<String>, AnnotationError> {
        if self.dropped.contains(raw) {
            return Ok(None);
        }
        if let Some(to) = self.remap.get(raw) {
            return Ok(Some(to.clone()));
        }
        if self.keep.contains(raw) {
            return Ok(Some(raw.to_string()));
        }
        match self.mode {
            SchemeMode::Binary => Ok(Some(BIRD_LABEL.to_string())),
            SchemeMode::Classifier => Err(AnnotationError::UnknownLabel(raw.to_string())),
        }
    }

    /// Classes in index order (lexicographic).
    pub fn classes(&self) -> Vec<String> {
        self.keep.iter().cloned().collect()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.keep.iter().position(|c| c == label)
    }
}

/// Remap labels through `scheme`, removing dropped annotations.
pub fn apply_scheme(annotations: &[Annotation], scheme: &LabelScheme) -> Result<Vec<Annotation>, AnnotationError> {
    let mut out = Vec::with_capacity(annotations.len());
    for a in annotations {
        if let Some(label) = scheme.map_label(&a.label)? {
            out.push(Annotation { label, ..a.clone() });
        }
    }
    Ok(out)
}

pub fn write_classes(classes: &[String], path: impl AsRef<Path>) -> Result<(), AnnotationError> {
    let mut text = String::new();
    for c in classes {
        text.push_str(c);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_classes(path: impl AsRef<Path>) -> Result<Vec<String>, AnnotationError> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    source_id: String,
    start_s: f64,
    end_s: f64,
    fmin_hz: Option<f64>,
    fmax_hz: Option<f64>,
    label: String,
}

/// Write the interchange CSV (`source_id,start_s,end_s,fmin_hz,fmax_hz,label`).
pub fn write_annotations_csv<W: Write>(annotations: &[Annotation], writer: W) -> Result<(), AnnotationError> {
    let mut w = csv::Writer::from_writer(writer);
    for a in annotations {
        w.serialize(CsvRow {
            source_id: a.source_id.clone(),
            start_s: a.start_s,
            end_s: a.end_s,
            fmin_hz: a.fmin_hz,
            fmax_hz: a.fmax_hz,
            label: a.label.clone(),
        })?;
    }
    if annotations.is_empty() {
        w.write_record(["source_id", "start_s", "end_s", "fmin_hz", "fmax_hz", "label"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_annotations_csv<R: Read>(reader: R) -> Result<Vec<Annotation>, AnnotationError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        // header occupies line 1
        let line = i + 2;
        if !(row.start_s >= 0.0 && row.start_s < row.end_s) {
            return Err(AnnotationError::MalformedRow {
                line,
                reason: format!("need 0 <= start < end, got {} / {}", row.start_s, row.end_s),
            });
        }
        if let (Some(lo), Some(hi)) = (row.fmin_hz, row.fmax_hz) {
            if lo >= hi {
                return Err(AnnotationError::MalformedRow {
                    line,
                    reason: format!("fmin {lo} >= fmax {hi}"),
                });
            }
        }
        out.push(Annotation {
            source_id: row.source_id,
            start_s: row.start_s,
            end_s: row.end_s,
            fmin_hz: row.fmin_hz,
            fmax_hz: row.fmax_hz,
            label: row.label,
        });
    }
    Ok(out)
}

pub fn load_annotations_csv(path: impl AsRef<Path>) -> Result<Vec<Annotation>, AnnotationError> {
    read_annotations_csv(std::fs::File::open(path)?)
}

/// A YOLO bounding box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YoloBox {
    pub class_idx: usize,
    pub x_center: f64,
    pub y_center: f64,
    pub x_width: f64,
    pub y_height: f64,
}

impl YoloBox {
    /// Full-height box spanning `[x_center - x_width/2, x_center + x_width/2]`.
    pub fn full_height(class_idx: usize, x_center: f64, x_width: f64) -> Self {
        Self {
            class_idx,
            x_center,
            y_center: 0.5,
            x_width,
            y_height: 1.0,
        }
    }

    fn coordinates(&self) -> [f64; 4] {
        [self.x_center, self.y_center, self.x_width, self.y_height]
    }

    pub fn is_valid(&self) -> bool {
        const EPS: f64 = 1e-9;
        let in_unit = |v: f64| (-EPS..=1.0 + EPS).contains(&v);
        self.coordinates().iter().all(|&v| in_unit(v))
            && in_unit(self.x_center - self.x_width / 2.0)
            && in_unit(self.x_center + self.x_width / 2.0)
    }
}

/// Normalize an annotation's time span against the clip duration.
pub fn to_yolo(a: &Annotation, file_duration_s: f64, scheme: &LabelScheme) -> Result<YoloBox, AnnotationError> {
    if !(a.start_s >= 0.0 && a.end_s <= file_duration_s && a.start_s < a.end_s) {
        return Err(AnnotationError::OutOfRange {
            start_s: a.start_s,
            end_s: a.end_s,
            duration_s: file_duration_s,
        });
    }
    let class_idx = scheme
        .class_index(&a.label)
        .ok_or_else(|| AnnotationError::UnknownLabel(a.label.clone()))?;
    Ok(YoloBox::full_height(
        class_idx,
        (a.start_s + a.end_s) / (2.0 * file_duration_s),
        (a.end_s - a.start_s) / file_duration_s,
    ))
}

/// Rows as written to a YOLO label file, one per box.
pub fn format_yolo_rows(boxes: &[YoloBox]) -> String {
    let mut s = String::new();
    for b in boxes {
        let _ = writeln!(
            s,
            "{} {:.6} {:.6} {:.6} {:.6}",
            b.class_idx, b.x_center, b.y_center, b.x_width, b.y_height
        );
    }
    s
}

pub fn parse_yolo_rows(text: &str) -> Result<Vec<YoloBox>, AnnotationError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split_whitespace().collect();
        if cols.len() != 5 {
            return Err(AnnotationError::MalformedRow {
                line,
                reason: format!("{} columns, expected 5", cols.len()),
            });
        }
        let class_idx = cols[0].parse().map_err(|_| AnnotationError::MalformedRow {
            line,
            reason: format!("class {:?} is not a non-negative integer", cols[0]),
        })?;
        let mut coords = [0.0; 4];
        for (c, field) in coords.iter_mut().zip(&cols[1..]) {
            *c = field.parse().map_err(|_| AnnotationError::MalformedRow {
                line,
                reason: format!("coordinate {field:?} is not a number"),
            })?;
            if !(0.0..=1.0).contains(c) {
                return Err(AnnotationError::CoordinateOutOfRange { line, value: *c });
            }
        }
        out.push(YoloBox {
            class_idx,
            x_center: coords[0],
            y_center: coords[1],
            x_width: coords[2],
            y_height: coords[3],
        });
    }
    Ok(out)
}

/// Write a label file. An empty box list yields a zero-byte file.
pub fn write_yolo_file(boxes: &[YoloBox], path: impl AsRef<Path>) -> Result<(), AnnotationError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, format_yolo_rows(boxes))?;
    Ok(())
}

pub fn read_yolo_file(path: impl AsRef<Path>) -> Result<Vec<YoloBox>, AnnotationError> {
    parse_yolo_rows(&std::fs::read_to_string(path)?)
}

/// Path of the file mirroring `file` (under `src_root`) inside `dst_root`,
/// with its extension replaced.
pub fn mirror_path(src_root: &Path, file: &Path, dst_root: &Path, extension: &str) -> PathBuf {
    let rel = file.strip_prefix(src_root).unwrap_or(file);
    let rel = if rel.as_os_str().is_empty() {
        file.file_name().map(PathBuf::from).unwrap_or_default()
    } else {
        rel.to_path_buf()
    };
    dst_root.join(rel).with_extension(extension)
}

/// Group annotations by source id, preserving input order within a group.
pub fn group_by_source(annotations: &[Annotation]) -> BTreeMap<String, Vec<Annotation>> {
    let mut groups: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        groups.entry(a.source_id.clone()).or_default().push(a.clone());
    }
    groups
}
