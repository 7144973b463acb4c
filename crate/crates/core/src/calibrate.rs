//! Confidence calibration.
//!
//! Detector confidences are mapped to logits and a logistic regression of
//! "this detection matched an annotation" is fitted on them. Inverting the
//! fit gives the confidence threshold at which a detection is correct with
//! a chosen probability, and the TP loss that threshold costs.

use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotations::Annotation;
use crate::detect::{filter_by_confidence, Detection};
use crate::evaluate::{match_detections, matched_flags};

/// Confidences are clamped to `[EPS, 1 − EPS]` before the logit.
pub const LOGIT_CLAMP_EPS: f64 = 1e-6;
pub const RIDGE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;
/// Convergence bound on the mean absolute log-likelihood gradient.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_TARGETS: [f64; 4] = [0.40, 0.60, 0.80, 0.95];
pub const DEFAULT_N_BOOT: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.90;

#[derive(Debug, thiserror::Error)]
pub enum CalibrateError {
    #[error("calibration data needs both correct and incorrect samples ({n_correct} of {n} correct)")]
    DegenerateData { n: usize, n_correct: usize },
    #[error("model slope {0} is not positive; thresholds are undefined")]
    NonMonotoneModel(f64),
    #[error("invalid calibration parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn confidence_to_logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_CLAMP_EPS, 1.0 - LOGIT_CLAMP_EPS);
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub confidence: f64,
    pub logit: f64,
    pub correct: bool,
}

impl CalibrationSample {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self {
            confidence,
            logit: confidence_to_logit(confidence),
            correct,
        }
    }
}

/// One sample per detection, correct when it matched an annotation.
pub fn samples_from_detections(preds: &[Detection], gts: &[Annotation], iou_min: f64) -> Vec<CalibrationSample> {
    preds
        .iter()
        .zip(matched_flags(preds, gts, iou_min))
        .map(|(d, hit)| CalibrationSample::new(d.confidence, hit))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub slope: f64,
    #[serde(rename = "n")]
    pub n_samples: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn predict(&self, logit: f64) -> f64 {
        sigmoid(self.intercept + self.slope * logit)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), CalibrateError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// Maximum-likelihood logistic fit by Newton/IRLS with a small ridge.
pub fn fit_logistic(samples: &[CalibrationSample]) -> Result<LogisticModel, CalibrateError> {
    let n = samples.len();
    let n_correct = samples.iter().filter(|s| s.correct).count();
    if n < 2 || n_correct == 0 || n_correct == n {
        return Err(CalibrateError::DegenerateData { n, n_correct });
    }

    let (mut b0, mut b1) = (0.0f64, 0.0f64);
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let (mut g0, mut g1) = (-RIDGE * b0, -RIDGE * b1);
        let (mut h00, mut h01, mut h11) = (RIDGE, 0.0, RIDGE);
        for s in samples {
            let p = sigmoid(b0 + b1 * s.logit);
            let r = f64::from(u8::from(s.correct)) - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * s.logit;
            h00 += w;
            h01 += w * s.logit;
            h11 += w * s.logit * s.logit;
        }
        if g0.abs().max(g1.abs()) / n as f64 <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        b0 += (h11 * g0 - h01 * g1) / det;
        b1 += (h00 * g1 - h01 * g0) / det;
    }
    Ok(LogisticModel {
        intercept: b0,
        slope: b1,
        n_samples: n,
        converged,
    })
}

/// Logit grid on which bootstrap bands are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitGrid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl Default for LogitGrid {
    fn default() -> Self {
        Self {
            start: -8.0,
            end: 8.0,
            points: 161,
        }
    }
}

impl LogitGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.end - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub logits: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub n_boot: usize,
    /// Resamples that had a single outcome class and were skipped.
    pub n_degenerate: usize,
}

impl BootstrapBand {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CalibrateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["logit", "lower", "upper"])?;
        for i in 0..self.logits.len() {
            w.write_record([
                format!("{:.4}", self.logits[i]),
                format!("{:.6}", self.lower[i]),
                format!("{:.6}", self.upper[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear-interpolation percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile band of refitted curves over bootstrap resamples.
///
/// Replicate `r` draws its resample from seed `seed + r`, so the band does
/// not depend on how replicates are spread over threads.
pub fn bootstrap_band(
    samples: &[CalibrationSample],
    n_boot: usize,
    level: f64,
    grid: &LogitGrid,
    seed: u64,
) -> Result<BootstrapBand, CalibrateError> {
    if n_boot == 0 {
        return Err(CalibrateError::InvalidParams("n_boot must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CalibrateError::InvalidParams(format!("level must be in (0, 1), got {level}")));
    }
    if samples.is_empty() {
        return Err(CalibrateError::DegenerateData { n: 0, n_correct: 0 });
    }
    let logits = grid.values();
    let fits: Vec<Option<LogisticModel>> = (0..n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let resample: Vec<CalibrationSample> = (0..samples.len())
                .map(|_| samples[rng.random_range(0..samples.len())])
                .collect();
            fit_logistic(&resample).ok()
        })
        .collect();
    let models: Vec<LogisticModel> = fits.iter().flatten().copied().collect();
    let n_degenerate = n_boot - models.len();
    if n_degenerate * 2 > n_boot || models.is_empty() {
        let n_correct = samples.iter().filter(|s| s.correct).count();
        return Err(CalibrateError::DegenerateData {
            n: samples.len(),
            n_correct,
        });
    }

    let alpha = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(logits.len());
    let mut upper = Vec::with_capacity(logits.len());
    let mut column = Vec::with_capacity(models.len());
    for &x in &logits {
        column.clear();
        column.extend(models.iter().map(|m| m.predict(x)));
        column.sort_by(f64::total_cmp);
        lower.push(percentile(&column, alpha));
        upper.push(percentile(&column, 1.0 - alpha));
    }
    Ok(BootstrapBand {
        logits,
        lower,
        upper,
        level,
        n_boot,
        n_degenerate,
    })
}

/// Logit and confidence at which the model predicts `p_target`.
pub fn threshold_for_probability(model: &LogisticModel, p_target: f64) -> Result<(f64, f64), CalibrateError> {
    if !(model.slope > 0.0) {
        return Err(CalibrateError::NonMonotoneModel(model.slope));
    }
    if !(p_target > 0.0 && p_target < 1.0) {
        return Err(CalibrateError::InvalidParams(format!(
            "target probability must be in (0, 1), got {p_target}"
        )));
    }
    let logit = ((p_target / (1.0 - p_target)).ln() - model.intercept) / model.slope;
    Ok((logit, sigmoid(logit)))
}

/// Round half up at `decimals` places (0.145 → 0.15 at two places).
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    // the nudge keeps decimal halves such as 0.145 from rounding down
    ((x * scale) + 0.5 + 1e-9).floor() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub probability_threshold: f64,
    pub logit_score: f64,
    pub confidence_score: f64,
    /// Confidence actually applied: the exact value, or rounded when asked.
    pub applied_threshold: f64,
    pub tp_loss_percent: f64,
    pub tp_kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub model: LogisticModel,
    pub tp_unfiltered: usize,
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationTable {
    /// `Probability threshold,Logit score,Confidence score,TP Loss (%)`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CalibrateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["Probability threshold", "Logit score", "Confidence score", "TP Loss (%)"])?;
        for r in &self.rows {
            w.write_record([
                format!("{}%", (r.probability_threshold * 100.0).round()),
                format!("{:.2}", r.logit_score),
                format!("{:.2}", r.confidence_score),
                format!("{:.2}", r.tp_loss_percent),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), CalibrateError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}

/// Threshold and TP loss for each target probability.
///
/// Loss is measured against the TP count of the unfiltered detections.
/// With `round_decimals` set, the applied confidence threshold is the
/// inverted value rounded half up to that many places.
pub fn tp_loss_table(
    preds: &[Detection],
    gts: &[Annotation],
    model: &LogisticModel,
    p_targets: &[f64],
    iou_min: f64,
    round_decimals: Option<u32>,
) -> Result<CalibrationTable, CalibrateError> {
    let tp_unfiltered = match_detections(preds, gts, iou_min).tp;
    let mut sorted_targets = p_targets.to_vec();
    sorted_targets.sort_by(f64::total_cmp);
    let rows = sorted_targets
        .into_iter()
        .map(|p| {
            let (logit, conf) = threshold_for_probability(model, p)?;
            let applied = round_decimals.map_or(conf, |d| round_half_up(conf, d));
            let kept = match_detections(&filter_by_confidence(preds, applied), gts, iou_min).tp;
            let loss = if tp_unfiltered == 0 {
                0.0
            } else {
                (1.0 - kept as f64 / tp_unfiltered as f64) * 100.0
            };
            Ok(CalibrationRow {
                probability_threshold: p,
                logit_score: logit,
                confidence_score: conf,
                applied_threshold: applied,
                tp_loss_percent: loss,
                tp_kept: kept,
            })
        })
        .collect::<Result<Vec<_>, CalibrateError>>()?;
    Ok(CalibrationTable {
        model: *model,
        tp_unfiltered,
        rows,
    })
}

/// Static SVG of the fitted curve, optional band, sample points and the
/// threshold crossings of `table`.
pub fn calibration_svg(
    model: &LogisticModel,
    band: Option<&BootstrapBand>,
    samples: &[CalibrationSample],
    table: Option<&CalibrationTable>,
    grid: &LogitGrid,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 40.0;
    let sx = |x: f64| M + (x - grid.start) / (grid.end - grid.start) * (W - 2.0 * M);
    let sy = |p: f64| H - M - p * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {} H{} M{M} {M} V{}" stroke="black" fill="none"/>"#,
        H - M,
        W - M,
        H - M
    );
    if let Some(b) = band {
        let mut d = String::new();
        for (i, (&x, &u)) in b.logits.iter().zip(&b.upper).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(x), sy(u));
        }
        for (&x, &l) in b.logits.iter().zip(&b.lower).rev() {
            let _ = write!(d, "L{:.2} {:.2} ", sx(x), sy(l));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#, d);
    }
    for smp in samples {
        let x = smp.logit.clamp(grid.start, grid.end);
        let y = if smp.correct { 1.0 } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="gray" fill-opacity="0.4"/>"#,
            sx(x),
            sy(y)
        );
    }
    let mut d = String::new();
    for (i, x) in grid.values().into_iter().enumerate() {
        let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(x), sy(model.predict(x)));
    }
    let _ = writeln!(s, r#"<path d="{}" stroke="steelblue" stroke-width="2" fill="none"/>"#, d.trim_end());
    if let Some(t) = table {
        for r in &t.rows {
            if r.logit_score < grid.start || r.logit_score > grid.end {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-dasharray="4 3"/>"#,
                sx(r.logit_score),
                sy(0.0),
                sx(r.logit_score),
                sy(r.probability_threshold)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn generative(intercept: f64, slope: f64, n: usize, seed: u64) -> Vec<CalibrationSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let logit: f64 = rng.random_range(-4.0..4.0);
                let correct = rng.random::<f64>() < sigmoid(intercept + slope * logit);
                CalibrationSample::new(sigmoid(logit), correct)
            })
            .collect()
    }

    #[test]
    fn logit_values() {
        assert_eq!(confidence_to_logit(0.5), 0.0);
        assert_abs_diff_eq!(confidence_to_logit(0.14), -1.8153, epsilon = 1e-4);
        assert!(confidence_to_logit(1.0).is_finite());
        assert!(confidence_to_logit(0.0).is_finite());
        assert_eq!(format!("{:.2}", sigmoid(-2.75)), "0.06");
    }

    #[test]
    fn recovers_generating_parameters() {
        let m = fit_logistic(&generative(2.0, 1.5, 5000, 7)).unwrap();
        assert!(m.converged);
        assert!((m.intercept - 2.0).abs() < 0.15, "{m:?}");
        assert!((m.slope - 1.5).abs() < 0.15, "{m:?}");
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        // invariant under (logit, correct) -> (-logit, !correct)
        let mut samples = Vec::new();
        for x in [0.5f64, 1.0, 2.0, 3.0] {
            samples.push(CalibrationSample::new(sigmoid(x), true));
            samples.push(CalibrationSample::new(sigmoid(-x), false));
        }
        samples.push(CalibrationSample::new(sigmoid(0.5), false));
        samples.push(CalibrationSample::new(sigmoid(-0.5), true));
        let m = fit_logistic(&samples).unwrap();
        assert_abs_diff_eq!(m.intercept, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn single_outcome_is_degenerate() {
        let all: Vec<_> = (1..10).map(|i| CalibrationSample::new(i as f64 / 10.0, true)).collect();
        assert!(matches!(fit_logistic(&all), Err(CalibrateError::DegenerateData { n: 9, n_correct: 9 })));
        assert!(fit_logistic(&[]).is_err());
    }

    #[test]
    fn separable_data_still_fits() {
        let s: Vec<_> = (0..20).map(|i| CalibrationSample::new((i as f64 + 0.5) / 20.0, i >= 10)).collect();
        let m = fit_logistic(&s).unwrap();
        assert!(m.slope > 0.0 && m.intercept.is_finite());
    }

    #[test]
    fn threshold_inverts_model() {
        let m = LogisticModel {
            intercept: 0.3,
            slope: 1.2,
            n_samples: 0,
            converged: true,
        };
        let (x, c) = threshold_for_probability(&m, m.predict(0.0)).unwrap();
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 0.5, epsilon = 1e-12);
        for p in DEFAULT_TARGETS {
            let (x, c) = threshold_for_probability(&m, p).unwrap();
            assert_abs_diff_eq!(m.predict(x), p, epsilon = 1e-9);
            assert_abs_diff_eq!(sigmoid(x), c, epsilon = 1e-12);
        }
        let flat = LogisticModel { slope: 0.0, ..m };
        assert!(matches!(threshold_for_probability(&flat, 0.6), Err(CalibrateError::NonMonotoneModel(_))));
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round_half_up(0.145, 2), 0.15);
        assert_eq!(round_half_up(0.1449, 2), 0.14);
        assert_eq!(round_half_up(0.14, 2), 0.14);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.05), 1.2);
        assert_eq!(percentile(&[7.0], 0.95), 7.0);
    }

    #[test]
    fn single_replicate_band_is_a_curve() {
        let s = generative(0.5, 1.0, 300, 3);
        let band = bootstrap_band(&s, 1, 0.9, &LogitGrid::default(), 11).unwrap();
        assert_eq!(band.lower, band.upper);
    }

    #[test]
    fn band_is_deterministic_and_covers_truth() {
        let s = generative(2.0, 1.5, 3000, 5);
        let grid = LogitGrid {
            start: -4.0,
            end: 4.0,
            points: 41,
        };
        let a = bootstrap_band(&s, 200, 0.9, &grid, 42).unwrap();
        let b = bootstrap_band(&s, 200, 0.9, &grid, 42).unwrap();
        assert_eq!(a, b);
        let covered = a
            .logits
            .iter()
            .enumerate()
            .filter(|(i, &x)| {
                let t = sigmoid(2.0 + 1.5 * x);
                a.lower[*i] - 1e-9 <= t && t <= a.upper[*i] + 1e-9
            })
            .count();
        assert!(covered as f64 >= 0.85 * a.logits.len() as f64, "{covered}");
        assert!(a.lower.iter().zip(&a.upper).all(|(l, u)| l <= u));
    }

    #[test]
    fn mostly_degenerate_resamples_fail() {
        let s = vec![CalibrationSample::new(0.9, true); 200];
        assert!(matches!(
            bootstrap_band(&s, 50, 0.9, &LogitGrid::default(), 1),
            Err(CalibrateError::DegenerateData { .. })
        ));
    }

    fn tp_fixture() -> (Vec<Detection>, Vec<Annotation>) {
        // 100 exact hits with confidences 0.005..0.995 plus 10 strays
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for i in 0..100 {
            let s = i as f64 * 2.0;
            gts.push(Annotation::new("f", s, s + 1.0, "Bird"));
            preds.push(Detection::new("f", s, s + 1.0, (i as f64 + 0.5) / 100.0));
        }
        for i in 0..10 {
            preds.push(Detection::new("g", i as f64, i as f64 + 0.5, 0.3));
        }
        (preds, gts)
    }

    #[test]
    fn tp_loss_counts() {
        let (preds, gts) = tp_fixture();
        // threshold 0.22 drops the 22 hits below it
        let m = LogisticModel {
            intercept: -confidence_to_logit(0.22),
            slope: 1.0,
            n_samples: 0,
            converged: true,
        };
        let t = tp_loss_table(&preds, &gts, &m, &[0.5, 0.0001, 0.999999], 0.1, None).unwrap();
        assert_eq!(t.tp_unfiltered, 100);
        assert_eq!(t.rows[0].tp_loss_percent, 0.0);
        assert_abs_diff_eq!(t.rows[1].tp_loss_percent, 22.0, epsilon = 1e-9);
        assert_eq!(t.rows[2].tp_loss_percent, 100.0);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Probability threshold,Logit score,Confidence score,TP Loss (%)\n"));
        assert!(text.contains("50%,-1.27,0.22,22.00\n"), "{text}");
    }

    #[test]
    fn samples_mark_matches() {
        let (preds, gts) = tp_fixture();
        let s = samples_from_detections(&preds, &gts, 0.1);
        assert_eq!(s.iter().filter(|x| x.correct).count(), 100);
        assert!(!s[105].correct);
    }

    #[test]
    fn svg_is_well_formed() {
        let s = generative(0.0, 1.0, 100, 2);
        let m = fit_logistic(&s).unwrap();
        let svg = calibration_svg(&m, None, &s, None, &LogitGrid::default());
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    proptest! {
        #[test]
        fn logit_round_trip(p in 1e-6f64..(1.0 - 1e-6)) {
            prop_assert!((sigmoid(confidence_to_logit(p)) - p).abs() < 1e-12);
        }

        #[test]
        fn loss_is_monotone(intercept in -2.0f64..2.0, slope in 0.2f64..3.0) {
            let (preds, gts) = tp_fixture();
            let m = LogisticModel { intercept, slope, n_samples: 0, converged: true };
            let t = tp_loss_table(&preds, &gts, &m, &DEFAULT_TARGETS, 0.1, None).unwrap();
            for w in t.rows.windows(2) {
                prop_assert!(w[0].tp_loss_percent <= w[1].tp_loss_percent);
            }
        }
    }
}
