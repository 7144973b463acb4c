//! Scoring detections and classifications against expert annotations.
//!
//! Detections are matched to annotations one-to-one per file, greedily in
//! order of decreasing confidence, using temporal IoU. Window-based models
//! are scored on a fixed grid of windows instead. On top of the matches sit
//! precision/recall/F1, all-points average precision, classification
//! reports, confusion matrices and before/after comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::annotations::{Annotation, BIRD_LABEL};
use crate::detect::Detection;

/// Minimum IoU for a detection to count as a hit.
pub const DEFAULT_IOU_MIN: f64 = 0.1;
/// Window length of fixed-window classifiers.
pub const DEFAULT_WINDOW_S: f64 = 3.0;
/// IoU used for AP50.
pub const AP_IOU: f64 = 0.5;
/// Prediction column for annotations no prediction overlaps.
pub const BACKGROUND_LABEL: &str = "Background";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no duration known for file {0:?}")]
    DurationUnknown(String),
    #[error("percentage change from an old value of zero")]
    DivisionByZero,
    #[error("no annotations to compare predictions against")]
    NoAnnotations,
    #[error("label {0:?} is not in the class order")]
    UnknownClass(String),
    #[error("invalid evaluation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Overlap duration over union duration of two intervals.
pub fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub detection: Detection,
    pub annotation: Annotation,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowOutcome {
    Tp,
    Fp,
    Fn,
    Tn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub source_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub outcome: WindowOutcome,
}

/// TP/FP/FN(/TN) assignment of a prediction set against ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Only defined when scoring on fixed windows.
    pub tn: Option<usize>,
    pub pairs: Vec<MatchedPair>,
    pub unmatched_detections: Vec<Detection>,
    pub unmatched_annotations: Vec<Annotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowRecord>,
}

impl MatchResult {
    fn absorb(&mut self, other: MatchResult) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn = match (self.tn, other.tn) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        self.pairs.extend(other.pairs);
        self.unmatched_detections.extend(other.unmatched_detections);
        self.unmatched_annotations.extend(other.unmatched_annotations);
        self.windows.extend(other.windows);
    }
}

/// Sort order used everywhere detections are ranked: confidence descending,
/// input order among equal confidences.
pub fn rank_by_confidence(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    order
}

fn group<'a, T>(items: &'a [T], key: impl Fn(&T) -> &str) -> BTreeMap<&'a str, Vec<&'a T>> {
    let mut m: BTreeMap<&str, Vec<&T>> = BTreeMap::new();
    for it in items {
        m.entry(key(it)).or_default().push(it);
    }
    m
}

/// Greedy match within one file; returns, per ranked prediction, the index
/// of the annotation it claimed.
fn greedy_assign(preds: &[&Detection], gts: &[&Annotation], iou_min: f64) -> Vec<Option<(usize, f64)>> {
    let mut taken = vec![false; gts.len()];
    preds
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let iou = interval_iou(p.span(), g.span());
                if iou >= iou_min && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            if let Some((j, _)) = best {
                taken[j] = true;
            }
            best
        })
        .collect()
}

/// One-to-one matching per file at `iou_min`.
///
/// Predictions are visited by decreasing confidence; each claims the still
/// unmatched annotation of highest IoU, provided it reaches `iou_min`.
pub fn match_detections(preds: &[Detection], gts: &[Annotation], iou_min: f64) -> MatchResult {
    let pred_groups = group(preds, |d| d.source_id.as_str());
    let gt_groups = group(gts, |a| a.source_id.as_str());
    let files: BTreeSet<&str> = pred_groups.keys().chain(gt_groups.keys()).copied().collect();

    let mut result = MatchResult::default();
    for file in files {
        let mut file_preds: Vec<&Detection> = pred_groups.get(file).cloned().unwrap_or_default();
        let file_gts: Vec<&Annotation> = gt_groups.get(file).cloned().unwrap_or_default();
        file_preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

        let claims = greedy_assign(&file_preds, &file_gts, iou_min);
        let mut claimed = vec![false; file_gts.len()];
        for (p, claim) in file_preds.iter().zip(claims) {
            match claim {
                Some((j, iou)) => {
                    claimed[j] = true;
                    result.tp += 1;
                    result.pairs.push(MatchedPair {
                        detection: (*p).clone(),
                        annotation: file_gts[j].clone(),
                        iou,
                    });
                }
                None => {
                    result.fp += 1;
                    result.unmatched_detections.push((*p).clone());
                }
            }
        }
        for (g, c) in file_gts.iter().zip(claimed) {
            if !c {
                result.fn_ += 1;
                result.unmatched_annotations.push((*g).clone());
            }
        }
    }
    result
}

/// Same matching as [`match_detections`], reported as one flag per input
/// prediction (true when it became a true positive).
pub fn matched_flags(preds: &[Detection], gts: &[Annotation], iou_min: f64) -> Vec<bool> {
    let gt_groups = group(gts, |a| a.source_id.as_str());
    let mut by_file: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &rank_by_confidence(preds) {
        by_file.entry(preds[i].source_id.as_str()).or_default().push(i);
    }
    let mut flags = vec![false; preds.len()];
    for (file, idxs) in by_file {
        let file_gts: Vec<&Annotation> = gt_groups.get(file).cloned().unwrap_or_default();
        let file_preds: Vec<&Detection> = idxs.iter().map(|&i| &preds[i]).collect();
        for (&i, claim) in idxs.iter().zip(greedy_assign(&file_preds, &file_gts, iou_min)) {
            flags[i] = claim.is_some();
        }
    }
    flags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// Every window is a unit with TP/FP/FN/TN.
    Window,
    /// Every annotation is a unit: a hit if any predicted window touches it.
    Annotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowParams {
    pub window_s: f64,
    pub mode: WindowMode,
    /// In window mode, an annotation marks a window positive only if its IoU
    /// with the window reaches this value; 0 means any overlap.
    pub iou_floor: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            mode: WindowMode::Window,
            iou_floor: 0.0,
        }
    }
}

fn windows_for(duration_s: f64, window_s: f64) -> Vec<(f64, f64)> {
    let n = ((duration_s / window_s) - 1e-9).ceil().max(0.0) as usize;
    (0..n)
        .map(|k| (k as f64 * window_s, ((k + 1) as f64 * window_s).min(duration_s)))
        .collect()
}

/// Score predictions on a fixed grid of windows.
///
/// `durations` must hold every file that appears in `preds` or `gts`.
pub fn fixed_window_eval(
    preds: &[Detection],
    gts: &[Annotation],
    durations: &BTreeMap<String, f64>,
    params: &WindowParams,
) -> Result<MatchResult, EvalError> {
    if !(params.window_s > 0.0) {
        return Err(EvalError::InvalidParams(format!(
            "window length must be positive, got {}",
            params.window_s
        )));
    }
    let pred_groups = group(preds, |d| d.source_id.as_str());
    let gt_groups = group(gts, |a| a.source_id.as_str());
    let files: BTreeSet<&str> = pred_groups
        .keys()
        .chain(gt_groups.keys())
        .copied()
        .chain(durations.keys().map(String::as_str))
        .collect();

    let mut result = MatchResult::default();
    for file in files {
        let duration = *durations
            .get(file)
            .ok_or_else(|| EvalError::DurationUnknown(file.to_string()))?;
        let fp: Vec<&Detection> = pred_groups.get(file).cloned().unwrap_or_default();
        let fg: Vec<&Annotation> = gt_groups.get(file).cloned().unwrap_or_default();
        let part = match params.mode {
            WindowMode::Window => score_windows(file, &fp, &fg, duration, params),
            WindowMode::Annotation => score_annotations(file, &fp, &fg, duration, params),
        };
        result.absorb(part);
    }
    if params.mode == WindowMode::Window && result.tn.is_none() {
        result.tn = Some(0);
    }
    Ok(result)
}

fn predicted_windows(preds: &[&Detection], windows: &[(f64, f64)]) -> Vec<bool> {
    windows
        .iter()
        .map(|&w| preds.iter().any(|p| overlap(p.span(), w) > 0.0))
        .collect()
}

fn score_windows(
    file: &str,
    preds: &[&Detection],
    gts: &[&Annotation],
    duration: f64,
    params: &WindowParams,
) -> MatchResult {
    let windows = windows_for(duration, params.window_s);
    let predicted = predicted_windows(preds, &windows);
    let mut r = MatchResult {
        tn: Some(0),
        ..Default::default()
    };
    let mut fp_seen = BTreeSet::new();
    let mut fn_seen = BTreeSet::new();
    for (&w, &pred_pos) in windows.iter().zip(&predicted) {
        let positive = |g: &&&Annotation| {
            if params.iou_floor > 0.0 {
                interval_iou(g.span(), w) >= params.iou_floor
            } else {
                overlap(g.span(), w) > 0.0
            }
        };
        let gt_pos = gts.iter().any(|g| positive(&g));
        let outcome = match (gt_pos, pred_pos) {
            (true, true) => {
                let det = preds
                    .iter()
                    .filter(|p| overlap(p.span(), w) > 0.0)
                    .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
                    .expect("predicted window has a detection");
                let ann = gts
                    .iter()
                    .filter(positive)
                    .max_by(|a, b| overlap(a.span(), w).total_cmp(&overlap(b.span(), w)))
                    .expect("positive window has an annotation");
                r.pairs.push(MatchedPair {
                    detection: (*det).clone(),
                    annotation: (*ann).clone(),
                    iou: interval_iou(det.span(), ann.span()),
                });
                r.tp += 1;
                WindowOutcome::Tp
            }
            (false, true) => {
                r.fp += 1;
                for (i, p) in preds.iter().enumerate() {
                    if overlap(p.span(), w) > 0.0 && fp_seen.insert(i) {
                        r.unmatched_detections.push((*p).clone());
                    }
                }
                WindowOutcome::Fp
            }
            (true, false) => {
                r.fn_ += 1;
                for (i, g) in gts.iter().enumerate() {
                    if positive(&g) && fn_seen.insert(i) {
                        r.unmatched_annotations.push((*g).clone());
                    }
                }
                WindowOutcome::Fn
            }
            (false, false) => {
                r.tn = r.tn.map(|t| t + 1);
                WindowOutcome::Tn
            }
        };
        r.windows.push(WindowRecord {
            source_id: file.to_string(),
            start_s: w.0,
            end_s: w.1,
            outcome,
        });
    }
    r
}

fn score_annotations(
    file: &str,
    preds: &[&Detection],
    gts: &[&Annotation],
    duration: f64,
    params: &WindowParams,
) -> MatchResult {
    let windows = windows_for(duration, params.window_s);
    let predicted = predicted_windows(preds, &windows);
    let positive_windows: Vec<(f64, f64)> = windows
        .iter()
        .zip(&predicted)
        .filter(|(_, p)| **p)
        .map(|(w, _)| *w)
        .collect();
    let mut r = MatchResult::default();
    for g in gts {
        let hit = positive_windows
            .iter()
            .filter(|w| overlap(g.span(), **w) > 0.0)
            .max_by(|a, b| overlap(g.span(), **a).total_cmp(&overlap(g.span(), **b)));
        match hit {
            Some(&w) => {
                let det = preds
                    .iter()
                    .filter(|p| overlap(p.span(), w) > 0.0)
                    .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
                    .expect("predicted window has a detection");
                r.tp += 1;
                r.pairs.push(MatchedPair {
                    detection: (*det).clone(),
                    annotation: (*g).clone(),
                    iou: interval_iou(det.span(), g.span()),
                });
            }
            None => {
                r.fn_ += 1;
                r.unmatched_annotations.push((*g).clone());
            }
        }
    }
    for &w in &positive_windows {
        let touches_gt = gts.iter().any(|g| overlap(g.span(), w) > 0.0);
        if !touches_gt {
            r.fp += 1;
            r.windows.push(WindowRecord {
                source_id: file.to_string(),
                start_s: w.0,
                end_s: w.1,
                outcome: WindowOutcome::Fp,
            });
            for p in preds.iter().filter(|p| overlap(p.span(), w) > 0.0) {
                if !r.unmatched_detections.contains(p) {
                    r.unmatched_detections.push((*p).clone());
                }
            }
        }
    }
    r
}

/// Precision, recall, F1 and (window mode only) accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: Option<usize>,
    /// Names of metrics whose denominator was zero (reported as 0).
    pub undefined: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn detection_metrics(m: &MatchResult) -> DetectionMetrics {
    let mut undefined = Vec::new();
    let precision = ratio(m.tp, m.tp + m.fp, "precision", &mut undefined);
    let recall = ratio(m.tp, m.tp + m.fn_, "recall", &mut undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1".into());
        0.0
    };
    let accuracy = m
        .tn
        .map(|tn| ratio(m.tp + tn, m.tp + m.fp + m.fn_ + tn, "accuracy", &mut undefined));
    DetectionMetrics {
        precision,
        recall,
        f1,
        accuracy,
        tp: m.tp,
        fp: m.fp,
        fn_: m.fn_,
        tn: m.tn,
        undefined,
    }
}

impl DetectionMetrics {
    /// Table-style CSV: counts and metrics rounded to two decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["tp", "fp", "fn", "tn", "precision", "recall", "f1", "accuracy"])?;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        w.write_record([
            self.tp.to_string(),
            self.fp.to_string(),
            self.fn_.to_string(),
            opt(self.tn.map(|t| t.to_string())),
            format!("{:.2}", self.precision),
            format!("{:.2}", self.recall),
            format!("{:.2}", self.f1),
            opt(self.accuracy.map(|a| format!("{a:.2}"))),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// `(new − old) / old × 100`.
pub fn percentage_change(new_value: f64, old_value: f64) -> Result<f64, EvalError> {
    if old_value == 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok((new_value - old_value) / old_value * 100.0)
}

/// Integer percent for tables (half away from zero).
pub fn round_percent(p: f64) -> i64 {
    p.round() as i64
}

/// Predictions per annotation; above 1 means over-prediction.
pub fn idx_pred_ann(n_predictions: usize, n_annotations: usize) -> Result<f64, EvalError> {
    if n_annotations == 0 {
        return Err(EvalError::NoAnnotations);
    }
    Ok(n_predictions as f64 / n_annotations as f64)
}

/// One row of a before/after comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub old: f64,
    pub new: f64,
    /// `None` when the old value is zero or either side is missing.
    pub change_percent: Option<f64>,
}

/// Percentage change of each count from `old` to `new`.
pub fn compare_metrics(old: &DetectionMetrics, new: &DetectionMetrics) -> Vec<ComparisonRow> {
    let mut rows: Vec<(&str, Option<f64>, Option<f64>)> = vec![
        ("TP", Some(old.tp as f64), Some(new.tp as f64)),
        ("FP", Some(old.fp as f64), Some(new.fp as f64)),
        ("FN", Some(old.fn_ as f64), Some(new.fn_ as f64)),
    ];
    rows.push(("TN", old.tn.map(|v| v as f64), new.tn.map(|v| v as f64)));
    rows.into_iter()
        .map(|(metric, o, n)| ComparisonRow {
            metric: metric.to_string(),
            old: o.unwrap_or(f64::NAN),
            new: n.unwrap_or(f64::NAN),
            change_percent: match (o, n) {
                (Some(o), Some(n)) => percentage_change(n, o).ok(),
                _ => None,
            },
        })
        .collect()
}

/// Comparison CSV with integer percentages and "-" where undefined.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "old", "new", "change_percent"])?;
    let num = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v}") };
    for r in rows {
        w.write_record([
            r.metric.clone(),
            num(r.old),
            num(r.new),
            r.change_percent
                .map(|p| format!("{:+}%", round_percent(p)))
                .unwrap_or_else(|| "-".into()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassRow>,
    pub accuracy: f64,
    pub macro_avg: AverageScores,
    pub weighted_avg: AverageScores,
    pub total_support: usize,
    pub n_predictions: usize,
    pub idx_pred_ann: Option<f64>,
}

impl ClassificationReport {
    /// Override the raw prediction count used for predictions-per-annotation.
    pub fn set_prediction_count(&mut self, n_predictions: usize) {
        self.n_predictions = n_predictions;
        self.idx_pred_ann = idx_pred_ann(n_predictions, self.total_support).ok();
    }

    /// Report CSV rounded to two decimals, with accuracy and average rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["class", "precision", "recall", "f1", "support"])?;
        let f = |v: f64| format!("{v:.2}");
        for r in &self.per_class {
            w.write_record([r.label.clone(), f(r.precision), f(r.recall), f(r.f1), r.support.to_string()])?;
        }
        let n = self.total_support.to_string();
        w.write_record(["accuracy".into(), String::new(), String::new(), f(self.accuracy), n.clone()])?;
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            w.write_record([name.to_string(), f(a.precision), f(a.recall), f(a.f1), n.clone()])?;
        }
        if let Some(idx) = self.idx_pred_ann {
            w.write_record([
                "idx pred/ann".to_string(),
                String::new(),
                String::new(),
                format!("{idx:.4}"),
                self.n_predictions.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn check_labels(
    preds: &[(String, String)],
    gts: &[(String, String)],
    class_order: &[String],
) -> Result<BTreeMap<String, String>, EvalError> {
    let known: BTreeSet<&str> = class_order.iter().map(String::as_str).collect();
    for (_, l) in gts {
        if !known.contains(l.as_str()) {
            return Err(EvalError::UnknownClass(l.clone()));
        }
    }
    let mut by_item = BTreeMap::new();
    for (item, l) in preds {
        if !known.contains(l.as_str()) && l != BIRD_LABEL && l != BACKGROUND_LABEL {
            return Err(EvalError::UnknownClass(l.clone()));
        }
        by_item.entry(item.clone()).or_insert_with(|| l.clone());
    }
    Ok(by_item)
}

/// Per-class precision/recall/F1 over ground-truth items.
///
/// Each `gt_labels` entry is one evaluated item. Its prediction is the first
/// `pred_labels` entry with the same item id, or "Background" when there is
/// none. Rows follow `class_order`; "Bird" and "Background" predictions
/// count as misses but get no row.
pub fn classification_report(
    pred_labels: &[(String, String)],
    gt_labels: &[(String, String)],
    class_order: &[String],
) -> Result<ClassificationReport, EvalError> {
    let by_item = check_labels(pred_labels, gt_labels, class_order)?;
    let idx: BTreeMap<&str, usize> = class_order
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let k = class_order.len();
    let (mut tp, mut predicted, mut support) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    let mut correct = 0;
    for (item, gt) in gt_labels {
        let pred = by_item.get(item).map(String::as_str).unwrap_or(BACKGROUND_LABEL);
        let g = idx[gt.as_str()];
        support[g] += 1;
        if let Some(&p) = idx.get(pred) {
            predicted[p] += 1;
        }
        if pred == gt {
            tp[g] += 1;
            correct += 1;
        }
    }

    let per_class: Vec<ClassRow> = (0..k)
        .map(|i| {
            let precision = if predicted[i] > 0 { tp[i] as f64 / predicted[i] as f64 } else { 0.0 };
            let recall = if support[i] > 0 { tp[i] as f64 / support[i] as f64 } else { 0.0 };
            ClassRow {
                label: class_order[i].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: support[i],
            }
        })
        .collect();

    let total: usize = support.iter().sum();
    let mean = |f: &dyn Fn(&ClassRow) -> f64| {
        if k == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / k as f64
        }
    };
    let weighted = |f: &dyn Fn(&ClassRow) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|r| f(r) * r.support as f64).sum::<f64>() / total as f64
        }
    };
    let macro_avg = AverageScores {
        precision: mean(&|r| r.precision),
        recall: mean(&|r| r.recall),
        f1: mean(&|r| r.f1),
    };
    let weighted_avg = AverageScores {
        precision: weighted(&|r| r.precision),
        recall: weighted(&|r| r.recall),
        f1: weighted(&|r| r.f1),
    };

    let n_predictions = pred_labels.len();
    Ok(ClassificationReport {
        per_class,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        macro_avg,
        weighted_avg,
        total_support: total,
        n_predictions,
        idx_pred_ann: idx_pred_ann(n_predictions, total).ok(),
    })
}

/// Label every annotation with the highest-confidence prediction that
/// overlaps it in time and reaches `min_confidence`; annotations with no
/// such prediction are labeled "Background". Unlabeled predictions read as
/// "Bird". Item ids are `source_id#index` in annotation order.
pub fn align_predictions(
    preds: &[Detection],
    gts: &[Annotation],
    min_confidence: f64,
) -> (Vec<(String, String)>, Vec<(String, String)>) {
    let pred_groups = group(preds, |d| d.source_id.as_str());
    let mut pred_labels = Vec::with_capacity(gts.len());
    let mut gt_labels = Vec::with_capacity(gts.len());
    for (i, g) in gts.iter().enumerate() {
        let item = format!("{}#{i}", g.source_id);
        let best = pred_groups
            .get(g.source_id.as_str())
            .into_iter()
            .flatten()
            .filter(|p| p.confidence >= min_confidence && overlap(p.span(), g.span()) > 0.0)
            .fold(None::<&Detection>, |best, p| match best {
                Some(b) if b.confidence >= p.confidence => Some(b),
                _ => Some(p),
            });
        let label = best
            .map(|p| p.label.clone().unwrap_or_else(|| BIRD_LABEL.to_string()))
            .unwrap_or_else(|| BACKGROUND_LABEL.to_string());
        pred_labels.push((item.clone(), label));
        gt_labels.push((item, g.label.clone()));
    }
    (pred_labels, gt_labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    None,
    Rows,
}

/// Rows are ground-truth classes, columns predicted classes. "Bird" and
/// "Background" columns are appended when any prediction uses them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["gt \\ pred".to_string()];
        header.extend(self.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn confusion_matrix(
    pred_labels: &[(String, String)],
    gt_labels: &[(String, String)],
    class_order: &[String],
    normalize: Normalize,
) -> Result<ConfusionMatrix, EvalError> {
    let by_item = check_labels(pred_labels, gt_labels, class_order)?;
    let assigned: Vec<(&str, &str)> = gt_labels
        .iter()
        .map(|(item, gt)| {
            let pred = by_item.get(item).map(String::as_str).unwrap_or(BACKGROUND_LABEL);
            (gt.as_str(), pred)
        })
        .collect();
    let mut cols: Vec<String> = class_order.to_vec();
    for extra in [BIRD_LABEL, BACKGROUND_LABEL] {
        if !cols.iter().any(|c| c == extra) && assigned.iter().any(|(_, p)| *p == extra) {
            cols.push(extra.to_string());
        }
    }
    let col_idx: BTreeMap<&str, usize> = cols.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let row_idx: BTreeMap<&str, usize> = class_order
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut values = vec![vec![0.0; cols.len()]; class_order.len()];
    for (gt, pred) in assigned {
        values[row_idx[gt]][col_idx[pred]] += 1.0;
    }
    if normalize == Normalize::Rows {
        for row in &mut values {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    Ok(ConfusionMatrix {
        row_labels: class_order.to_vec(),
        col_labels: cols,
        values,
    })
}

/// Single-class average precision at IoU 0.5 (AP50 = mAP50 for one class).
///
/// Detections across all files are ranked by confidence; each rank is
/// matched greedily exactly as in [`match_detections`]. Precision/recall
/// points are taken at every distinct confidence, and the area under the
/// precision envelope (all-points interpolation) is returned.
pub fn average_precision_50(preds: &[Detection], gts: &[Annotation]) -> f64 {
    average_precision(preds, gts, AP_IOU)
}

pub fn average_precision(preds: &[Detection], gts: &[Annotation], iou_min: f64) -> f64 {
    if preds.is_empty() || gts.is_empty() {
        return 0.0;
    }
    let gt_groups = group(gts, |a| a.source_id.as_str());
    let order = rank_by_confidence(preds);

    // per-file greedy matching in global rank order; the prefix property
    // makes each threshold's matching a prefix of this one
    let mut taken: BTreeMap<&str, Vec<bool>> = gt_groups
        .iter()
        .map(|(f, g)| (*f, vec![false; g.len()]))
        .collect();
    let hits: Vec<bool> = order
        .iter()
        .map(|&i| {
            let p = &preds[i];
            let Some(file_gts) = gt_groups.get(p.source_id.as_str()) else {
                return false;
            };
            let flags = taken.get_mut(p.source_id.as_str()).expect("same keys");
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in file_gts.iter().enumerate() {
                if flags[j] {
                    continue;
                }
                let iou = interval_iou(p.span(), g.span());
                if iou >= iou_min && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            match best {
                Some((j, _)) => {
                    flags[j] = true;
                    true
                }
                None => false,
            }
        })
        .collect();

    // PR points at the end of each group of equal confidence
    let n_gt = gts.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut tp = 0usize;
    for (rank, (&i, &hit)) in order.iter().zip(&hits).enumerate() {
        tp += usize::from(hit);
        let last_of_group = order
            .get(rank + 1)
            .is_none_or(|&next| preds[next].confidence != preds[i].confidence);
        if last_of_group {
            points.push((tp as f64 / n_gt, tp as f64 / (rank + 1) as f64));
        }
    }

    // precision envelope, right to left
    let mut envelope = points.iter().map(|p| p.1).collect::<Vec<_>>();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for ((recall, _), env) in points.iter().zip(&envelope) {
        ap += (recall - prev_recall) * env;
        prev_recall = *recall;
    }
    ap
}
