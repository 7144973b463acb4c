//! Detections: conversion of normalized boxes back to time segments,
//! confidence filtering, a band-limited energy detector baseline, and
//! ingestion of external detector output.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotations::{YoloBox, CLIP_DURATION_S};
use crate::audio::AudioClip;
use crate::spectrogram::IMAGE_WIDTH_PX;

/// Confidences are kept inside `[CONFIDENCE_EPS, 1 - CONFIDENCE_EPS]`.
pub const CONFIDENCE_EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: confidence {value} outside [0, 1]")]
    ConfidenceOutOfRange { line: usize, value: f64 },
    #[error("clip {source_id:?} lasts {duration_s} s, shorter than one {frame_s} s frame")]
    ClipTooShort {
        source_id: String,
        duration_s: f64,
        frame_s: f64,
    },
    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),
    #[error("unrecognized detection file {0:?}; expected .csv or .txt")]
    UnknownFormat(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A detected segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub source_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub confidence: f64,
    pub label: Option<String>,
}

impl Detection {
    pub fn new(source_id: impl Into<String>, start_s: f64, end_s: f64, confidence: f64) -> Self {
        Self {
            source_id: source_id.into(),
            start_s,
            end_s,
            confidence,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn span(&self) -> (f64, f64) {
        (self.start_s, self.end_s)
    }
}

/// Map a normalized box back to `(start_s, end_s)`.
///
/// The box is first denormalized to pixels (`x_center·W`, `x_width·W`), then
/// the pixel edges are scaled by `clip_duration_s / W` and clamped to the clip.
pub fn bbox_to_time(b: &YoloBox, image_width_px: u32, clip_duration_s: f64) -> (f64, f64) {
    let w = f64::from(image_width_px);
    let x_center_d = b.x_center * w;
    let w_d = b.x_width * w;
    let start = (x_center_d - w_d / 2.0) * (clip_duration_s / w);
    let end = (x_center_d + w_d / 2.0) * (clip_duration_s / w);
    (start.clamp(0.0, clip_duration_s), end.clamp(0.0, clip_duration_s))
}

/// Keep detections with `confidence >= threshold`, in order.
pub fn filter_by_confidence(detections: &[Detection], threshold: f64) -> Vec<Detection> {
    detections
        .iter()
        .filter(|d| d.confidence >= threshold)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub band_hz: (f64, f64),
    pub frame_s: f64,
    pub hop_s: f64,
    pub k_mad: f64,
    pub min_dur_s: f64,
    pub merge_gap_s: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            band_hz: (600.0, 16_000.0),
            frame_s: 0.05,
            hop_s: 0.025,
            k_mad: 3.0,
            min_dur_s: 0.08,
            merge_gap_s: 0.15,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |m: String| Err(DetectError::InvalidParams(m));
        let (lo, hi) = self.band_hz;
        if !(lo >= 0.0 && lo < hi) {
            return bad(format!("band ({lo}, {hi}) Hz is not ordered"));
        }
        if !(self.hop_s > 0.0 && self.frame_s >= self.hop_s) {
            return bad(format!(
                "need frame_s >= hop_s > 0, got {} / {}",
                self.frame_s, self.hop_s
            ));
        }
        if !(self.k_mad >= 0.0 && self.min_dur_s >= 0.0 && self.merge_gap_s >= 0.0) {
            return bad("k_mad, min_dur_s and merge_gap_s must be non-negative".into());
        }
        Ok(())
    }
}

/// RBJ cookbook biquad, direct form I.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn new(kind: FilterKind, cutoff_hz: f64, sample_rate: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = match kind {
            FilterKind::HighPass => [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
            FilterKind::LowPass => [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
        };
        Self {
            b: b.map(|v| v / a0),
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for s in x.iter_mut() {
            let y = self.b[0] * *s + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *s;
            y2 = y1;
            y1 = y;
            *s = y;
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum FilterKind {
    HighPass,
    LowPass,
}

/// Fourth-order Butterworth band-pass as two cascaded sections per edge.
/// An edge at or beyond Nyquist (or at 0 Hz) is skipped.
fn band_pass(samples: &[f32], sample_rate: f64, (lo, hi): (f64, f64)) -> Vec<f64> {
    // Q of the two sections of a 4th-order Butterworth
    const QS: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_7];
    let nyquist = sample_rate / 2.0;
    let mut x: Vec<f64> = samples.iter().map(|&s| f64::from(s)).collect();
    if lo > 0.0 && lo < nyquist * 0.99 {
        for q in QS {
            Biquad::new(FilterKind::HighPass, lo, sample_rate, q).run(&mut x);
        }
    }
    if hi < nyquist * 0.99 {
        for q in QS {
            Biquad::new(FilterKind::LowPass, hi, sample_rate, q).run(&mut x);
        }
    }
    x
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Frame RMS envelope with frame centers in seconds.
fn rms_envelope(x: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    let n_frames = (x.len() - frame) / hop + 1;
    (0..n_frames)
        .map(|f| {
            let w = &x[f * hop..f * hop + frame];
            (w.iter().map(|v| v * v).sum::<f64>() / frame as f64).sqrt()
        })
        .collect()
}

/// Monotone map of a positive excess onto `(0, 1)`: σ(ln z) = z / (1 + z).
fn squash(z: f64) -> f64 {
    (z / (1.0 + z)).clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS)
}

/// Scale that turns a MAD into a standard deviation for Gaussian data.
pub const MAD_TO_SIGMA: f64 = 1.4826;

/// Threshold a band-limited RMS envelope at `median + k·MAD`, with the MAD
/// scaled to a standard deviation so that `k` counts sigmas.
///
/// Active frame runs closer than `merge_gap_s` are merged and runs shorter
/// than `min_dur_s` dropped. Confidence grows with the run's peak excess over
/// the threshold, measured in MADs.
pub fn energy_detector(clip: &AudioClip, params: &DetectorParams) -> Result<Vec<Detection>, DetectError> {
    params.validate()?;
    let sr = f64::from(clip.sample_rate_hz);
    let frame = ((params.frame_s * sr).round() as usize).max(1);
    let hop = ((params.hop_s * sr).round() as usize).max(1);
    if clip.len() <= frame {
        return Err(DetectError::ClipTooShort {
            source_id: clip.source_id.clone(),
            duration_s: clip.duration_s(),
            frame_s: params.frame_s,
        });
    }

    let filtered = band_pass(&clip.samples, sr, params.band_hz);
    let env = rms_envelope(&filtered, frame, hop);
    let mut scratch = env.clone();
    let med = median(&mut scratch);
    for v in scratch.iter_mut() {
        *v = (*v - med).abs();
    }
    let mad = MAD_TO_SIGMA * median(&mut scratch);
    let threshold = med + params.k_mad * mad;
    let scale = mad.max(f64::MIN_POSITIVE);

    // (first frame, last frame, peak envelope) of each active run
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &e) in env.iter().enumerate() {
        if e <= threshold || e <= 0.0 {
            continue;
        }
        match runs.last_mut() {
            Some(run) if run.1 + 1 == i => {
                run.1 = i;
                run.2 = run.2.max(e);
            }
            _ => runs.push((i, i, e)),
        }
    }

    let hop_s = hop as f64 / sr;
    let half_frame_s = frame as f64 / (2.0 * sr);
    let duration = clip.duration_s();
    let span = |first: usize, last: usize| {
        let start = first as f64 * hop_s + half_frame_s - hop_s / 2.0;
        let end = last as f64 * hop_s + half_frame_s + hop_s / 2.0;
        (start.max(0.0), end.min(duration))
    };

    let mut segments: Vec<(f64, f64, f64)> = Vec::new();
    for (first, last, peak) in runs {
        let (start, end) = span(first, last);
        match segments.last_mut() {
            Some(prev) if start - prev.1 < params.merge_gap_s => {
                prev.1 = end;
                prev.2 = prev.2.max(peak);
            }
            _ => segments.push((start, end, peak)),
        }
    }

    Ok(segments
        .into_iter()
        .filter(|(s, e, _)| e - s >= params.min_dur_s && e > s)
        .map(|(s, e, peak)| Detection::new(clip.source_id.clone(), s, e, squash((peak - threshold) / scale)))
        .collect())
}

/// Options for turning YOLO-with-confidence rows into detections.
#[derive(Debug, Clone, PartialEq)]
pub struct YoloIngest {
    pub source_id: String,
    pub image_width_px: u32,
    pub clip_duration_s: f64,
    /// Class names by index; without them detections are unlabeled.
    pub classes: Option<Vec<String>>,
}

impl YoloIngest {
    pub fn new(source_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            image_width_px: IMAGE_WIDTH_PX,
            clip_duration_s: CLIP_DURATION_S,
            classes: None,
        }
    }
}

fn checked_confidence(value: f64, line: usize) -> Result<f64, DetectError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(DetectError::ConfidenceOutOfRange { line, value });
    }
    Ok(value.clamp(CONFIDENCE_EPS, 1.0 - CONFIDENCE_EPS))
}

/// Parse rows of `class x_center y_center x_width y_height confidence`.
pub fn parse_yolo_detections(text: &str, opts: &YoloIngest) -> Result<Vec<Detection>, DetectError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(DetectError::MalformedRow {
                line,
                reason: format!("{} columns, expected 6", cols.len()),
            });
        }
        let class_idx: usize = cols[0].parse().map_err(|_| DetectError::MalformedRow {
            line,
            reason: format!("class {:?} is not a non-negative integer", cols[0]),
        })?;
        let mut v = [0.0f64; 5];
        for (slot, field) in v.iter_mut().zip(&cols[1..]) {
            *slot = field.parse().map_err(|_| DetectError::MalformedRow {
                line,
                reason: format!("{field:?} is not a number"),
            })?;
        }
        let confidence = checked_confidence(v[4], line)?;
        if v[..4].iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(DetectError::MalformedRow {
                line,
                reason: "box coordinate outside [0, 1]".into(),
            });
        }
        let b = YoloBox {
            class_idx,
            x_center: v[0],
            y_center: v[1],
            x_width: v[2],
            y_height: v[3],
        };
        let (start_s, end_s) = bbox_to_time(&b, opts.image_width_px, opts.clip_duration_s);
        if !(end_s > start_s) {
            return Err(DetectError::MalformedRow {
                line,
                reason: "box has zero width inside the clip".into(),
            });
        }
        let label = match &opts.classes {
            Some(classes) => Some(classes.get(class_idx).cloned().ok_or_else(|| {
                DetectError::MalformedRow {
                    line,
                    reason: format!("class index {class_idx} has no name"),
                }
            })?),
            None => None,
        };
        out.push(Detection {
            source_id: opts.source_id.clone(),
            start_s,
            end_s,
            confidence,
            label,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    source_id: String,
    start_s: f64,
    end_s: f64,
    confidence: f64,
    label: Option<String>,
}

/// Read the detections CSV (`source_id,start_s,end_s,confidence,label`).
pub fn read_detections_csv<R: Read>(reader: R) -> Result<Vec<Detection>, DetectError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let line = i + 2;
        let row = row?;
        let confidence = checked_confidence(row.confidence, line)?;
        if !(row.start_s >= 0.0 && row.start_s < row.end_s) {
            return Err(DetectError::MalformedRow {
                line,
                reason: format!("need 0 <= start < end, got {} / {}", row.start_s, row.end_s),
            });
        }
        out.push(Detection {
            source_id: row.source_id,
            start_s: row.start_s,
            end_s: row.end_s,
            confidence,
            label: row.label.filter(|l| !l.is_empty()),
        });
    }
    Ok(out)
}

pub fn write_detections_csv<W: Write>(detections: &[Detection], writer: W) -> Result<(), DetectError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source_id", "start_s", "end_s", "confidence", "label"])?;
    for d in detections {
        w.write_record([
            d.source_id.clone(),
            format!("{:.6}", d.start_s),
            format!("{:.6}", d.end_s),
            format!("{:.6}", d.confidence),
            d.label.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Load detections from a `.csv` file or a YOLO `.txt` file. For YOLO input
/// the source id defaults to the file stem.
pub fn ingest_detections(path: impl AsRef<Path>, yolo: Option<&YoloIngest>) -> Result<Vec<Detection>, DetectError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "csv" => read_detections_csv(std::fs::File::open(path)?),
        "txt" => {
            let default = YoloIngest::new(crate::audio::source_id_for(path));
            parse_yolo_detections(&std::fs::read_to_string(path)?, yolo.unwrap_or(&default))
        }
        _ => Err(DetectError::UnknownFormat(path.display().to_string())),
    }
}
