//! Commands that score detections: eval-detections, eval-windows,
//! calibrate, eval-classifier, compare.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use songsieve_core::annotations::{read_classes, Annotation};
use songsieve_core::calibrate::{
    bootstrap_band, calibration_svg, fit_logistic, samples_from_detections, tp_loss_table,
};
use songsieve_core::detect::{filter_by_confidence, Detection};
use songsieve_core::evaluate::{
    align_predictions, average_precision_50, classification_report, compare_metrics, confusion_matrix,
    detection_metrics, fixed_window_eval, match_detections, write_comparison_csv, DetectionMetrics,
    MatchResult, Normalize, WindowMode, WindowOutcome, WindowParams,
};

use crate::error::{AtPath, CliError, CliResult};
use crate::files::{audio_durations, find_files, load_detections, load_gt, require, write_json, write_text};
use crate::manifest::RunRecorder;
use crate::{
    CalibrateArgs, CompareArgs, Context, EvalClassifierArgs, EvalDetectionsArgs, EvalWindowsArgs, NormalizeArg,
    WindowModeArg,
};

fn load_pair(gt: &Path, pred: &Path, rec: &mut RunRecorder) -> CliResult<(Vec<Annotation>, Vec<Detection>)> {
    let gts = load_gt(gt)?;
    let preds = load_detections(pred, None)?;
    rec.input(gt);
    for f in find_files(pred, &["csv", "txt"])? {
        rec.input(f.path);
    }
    Ok((gts, preds))
}

#[derive(Serialize)]
struct DetectionReport {
    iou_min: f64,
    confidence_threshold: f64,
    n_predictions: usize,
    n_annotations: usize,
    ap50: f64,
    metrics: DetectionMetrics,
}

fn write_metrics(rec: &mut RunRecorder, metrics: &DetectionMetrics, report: &impl Serialize) -> CliResult<()> {
    let json = rec.output("metrics.json")?;
    write_json(&json, report)?;
    rec.artifact(json);
    let csv = rec.output("metrics.csv")?;
    metrics.write_csv(std::fs::File::create(&csv)?).at(&csv)?;
    rec.artifact(csv);
    Ok(())
}

fn write_matches(path: &Path, m: &MatchResult) -> CliResult<()> {
    let mut out = String::from("outcome,source_id,det_start_s,det_end_s,confidence,gt_start_s,gt_end_s,label,iou\n");
    let mut rows: Vec<(String, f64, String)> = Vec::new();
    for p in &m.pairs {
        let d = &p.detection;
        let a = &p.annotation;
        let line = format!(
            "tp,{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}\n",
            d.source_id, d.start_s, d.end_s, d.confidence, a.start_s, a.end_s, a.label, p.iou
        );
        rows.push((d.source_id.clone(), d.start_s, line));
    }
    for d in &m.unmatched_detections {
        let line = format!(
            "fp,{},{:.6},{:.6},{:.6},,,{},\n",
            d.source_id,
            d.start_s,
            d.end_s,
            d.confidence,
            d.label.as_deref().unwrap_or("")
        );
        rows.push((d.source_id.clone(), d.start_s, line));
    }
    for a in &m.unmatched_annotations {
        let line = format!("fn,{},,,,{:.6},{:.6},{},\n", a.source_id, a.start_s, a.end_s, a.label);
        rows.push((a.source_id.clone(), a.start_s, line));
    }
    rows.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
    for (_, _, line) in rows {
        out.push_str(&line);
    }
    write_text(path, &out)
}

pub fn eval_detections(ctx: &mut Context, args: EvalDetectionsArgs) -> CliResult<PathBuf> {
    let e = &mut ctx.config.evaluation;
    if let Some(v) = args.iou_min {
        e.iou_min = v;
    }
    if let Some(v) = args.threshold {
        e.confidence_threshold = v;
    }
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("eval-detections", ctx.output_root.join("eval-detections"));
    let (gts, preds) = load_pair(&args.gt, &args.pred, &mut rec)?;
    let e = &ctx.config.evaluation;
    let kept = filter_by_confidence(&preds, e.confidence_threshold);
    let matched = match_detections(&kept, &gts, e.iou_min);
    let metrics = detection_metrics(&matched);
    for name in &metrics.undefined {
        rec.warn(format!("{name} is undefined (zero denominator); reported as 0"));
    }
    let report = DetectionReport {
        iou_min: e.iou_min,
        confidence_threshold: e.confidence_threshold,
        n_predictions: kept.len(),
        n_annotations: gts.len(),
        ap50: average_precision_50(&kept, &gts),
        metrics: metrics.clone(),
    };
    write_metrics(&mut rec, &metrics, &report)?;
    let matches = rec.output("matches.csv")?;
    write_matches(&matches, &matched)?;
    rec.artifact(matches);
    rec.finish(&ctx.config)
}

#[derive(Serialize)]
struct WindowReport {
    window_s: f64,
    mode: WindowMode,
    iou_floor: f64,
    confidence_threshold: f64,
    n_windows: usize,
    metrics: DetectionMetrics,
}

pub fn eval_windows(ctx: &mut Context, args: EvalWindowsArgs) -> CliResult<PathBuf> {
    let e = &mut ctx.config.evaluation;
    if let Some(v) = args.window {
        e.window_s = v;
    }
    if let Some(m) = args.mode {
        e.window_mode = match m {
            WindowModeArg::Window => WindowMode::Window,
            WindowModeArg::Annotation => WindowMode::Annotation,
        };
    }
    if let Some(v) = args.iou_floor {
        e.iou_floor = v;
    }
    if let Some(v) = args.threshold {
        e.confidence_threshold = v;
    }
    if let Some(v) = args.duration {
        e.clip_duration_s = v;
    }
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("eval-windows", ctx.output_root.join("eval-windows"));
    let (gts, preds) = load_pair(&args.gt, &args.pred, &mut rec)?;
    let e = ctx.config.evaluation.clone();
    let mut durations = match &args.audio {
        Some(a) => {
            for f in find_files(a, &["wav"])? {
                rec.input(f.path);
            }
            audio_durations(a)?
        }
        None => BTreeMap::new(),
    };
    let ids: BTreeSet<&str> = gts
        .iter()
        .map(|a| a.source_id.as_str())
        .chain(preds.iter().map(|d| d.source_id.as_str()))
        .collect();
    for id in ids {
        durations.entry(id.to_string()).or_insert(e.clip_duration_s);
    }

    let kept = filter_by_confidence(&preds, e.confidence_threshold);
    let params = WindowParams {
        window_s: e.window_s,
        mode: e.window_mode,
        iou_floor: e.iou_floor,
    };
    let matched = fixed_window_eval(&kept, &gts, &durations, &params)?;
    let metrics = detection_metrics(&matched);
    for name in &metrics.undefined {
        rec.warn(format!("{name} is undefined (zero denominator); reported as 0"));
    }
    let report = WindowReport {
        window_s: e.window_s,
        mode: e.window_mode,
        iou_floor: e.iou_floor,
        confidence_threshold: e.confidence_threshold,
        n_windows: matched.windows.len(),
        metrics: metrics.clone(),
    };
    write_metrics(&mut rec, &metrics, &report)?;

    let mut table = String::from("source_id,start_s,end_s,outcome\n");
    for w in &matched.windows {
        let outcome = match w.outcome {
            WindowOutcome::Tp => "tp",
            WindowOutcome::Fp => "fp",
            WindowOutcome::Fn => "fn",
            WindowOutcome::Tn => "tn",
        };
        table.push_str(&format!("{},{:.3},{:.3},{outcome}\n", w.source_id, w.start_s, w.end_s));
    }
    let windows = rec.output("windows.csv")?;
    write_text(&windows, &table)?;
    rec.artifact(windows);
    rec.finish(&ctx.config)
}

pub fn calibrate(ctx: &mut Context, args: CalibrateArgs) -> CliResult<PathBuf> {
    let c = &mut ctx.config.calibration;
    if let Some(t) = args.targets {
        c.targets = t;
    }
    if let Some(v) = args.n_boot {
        c.n_boot = v;
    }
    if let Some(v) = args.level {
        c.level = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if args.round.is_some() {
        c.round_decimals = args.round;
    }
    if args.plot {
        c.plot = true;
    }
    if let Some(v) = args.iou_min {
        ctx.config.evaluation.iou_min = v;
    }
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("calibrate", ctx.output_root.join("calibrate"));
    let (gts, preds) = load_pair(&args.gt, &args.pred, &mut rec)?;
    let c = ctx.config.calibration.clone();
    let iou_min = ctx.config.evaluation.iou_min;
    rec.set_seed(c.seed);

    let samples = samples_from_detections(&preds, &gts, iou_min);
    let model = fit_logistic(&samples)?;
    if !model.converged {
        rec.warn("logistic fit did not converge; estimates may be unreliable");
    }
    let table = tp_loss_table(&preds, &gts, &model, &c.targets, iou_min, c.round_decimals)?;

    let model_path = rec.output("model.json")?;
    write_json(&model_path, &model)?;
    rec.artifact(model_path);
    let csv = rec.output("calibration.csv")?;
    table.write_csv(std::fs::File::create(&csv)?).at(&csv)?;
    rec.artifact(csv);
    let json = rec.output("calibration.json")?;
    write_json(&json, &table)?;
    rec.artifact(json);

    let band = if c.n_boot > 0 {
        let band = ctx
            .pool()?
            .install(|| bootstrap_band(&samples, c.n_boot, c.level, &c.grid, c.seed))?;
        if band.n_degenerate > 0 {
            rec.warn(format!(
                "{} of {} bootstrap replicates were degenerate and skipped",
                band.n_degenerate, band.n_boot
            ));
        }
        let path = rec.output("band.csv")?;
        band.write_csv(std::fs::File::create(&path)?).at(&path)?;
        rec.artifact(path);
        Some(band)
    } else {
        None
    };
    if c.plot {
        let svg = calibration_svg(&model, band.as_ref(), &samples, Some(&table), &c.grid);
        let path = rec.output("calibration.svg")?;
        write_text(&path, &svg)?;
        rec.artifact(path);
    }
    rec.finish(&ctx.config)
}

pub fn eval_classifier(ctx: &mut Context, args: EvalClassifierArgs) -> CliResult<PathBuf> {
    if let Some(v) = args.min_confidence {
        ctx.config.evaluation.align_min_confidence = v;
    }
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("eval-classifier", ctx.output_root.join("eval-classifier"));
    let (gts, preds) = load_pair(&args.gt, &args.pred, &mut rec)?;
    let min_conf = ctx.config.evaluation.align_min_confidence;
    let classes = match &args.classes {
        Some(p) => {
            require(p, "classes file")?;
            rec.input(p);
            read_classes(p).at(p)?
        }
        None => gts
            .iter()
            .map(|a| a.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let (pred_labels, gt_labels) = align_predictions(&preds, &gts, min_conf);
    let mut report = classification_report(&pred_labels, &gt_labels, &classes)?;
    report.set_prediction_count(preds.iter().filter(|d| d.confidence >= min_conf).count());
    let normalize = match args.normalize {
        NormalizeArg::None => Normalize::None,
        NormalizeArg::Rows => Normalize::Rows,
    };
    let matrix = confusion_matrix(&pred_labels, &gt_labels, &classes, normalize)?;

    let json = rec.output("report.json")?;
    write_json(&json, &report)?;
    rec.artifact(json);
    let csv = rec.output("report.csv")?;
    report.write_csv(std::fs::File::create(&csv)?).at(&csv)?;
    rec.artifact(csv);
    let confusion = rec.output("confusion.csv")?;
    matrix.write_csv(std::fs::File::create(&confusion)?).at(&confusion)?;
    rec.artifact(confusion);
    rec.finish(&ctx.config)
}

/// Counts from a metrics JSON: either at the top level or under `metrics`.
fn read_counts(path: &Path) -> CliResult<DetectionMetrics> {
    require(path, "metrics file")?;
    let text = std::fs::read_to_string(path).at(path)?;
    let v: Value = serde_json::from_str(&text).at(path)?;
    let obj = v.get("metrics").unwrap_or(&v);
    let count = |key: &str| -> CliResult<Option<usize>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(x) => x
                .as_u64()
                .map(|n| Some(n as usize))
                .ok_or_else(|| CliError::data(format!("{}: {key} is not a count", path.display()))),
        }
    };
    let need = |key: &str| -> CliResult<usize> {
        count(key)?.ok_or_else(|| CliError::data(format!("{}: missing {key}", path.display())))
    };
    Ok(DetectionMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        accuracy: None,
        tp: need("tp")?,
        fp: need("fp")?,
        fn_: need("fn")?,
        tn: count("tn")?,
        undefined: Vec::new(),
    })
}

pub fn compare(ctx: &mut Context, args: CompareArgs) -> CliResult<PathBuf> {
    ctx.config.validate()?;
    let mut rec = RunRecorder::new("compare", ctx.output_root.join("compare"));
    let old = read_counts(&args.a)?;
    let new = read_counts(&args.b)?;
    rec.input(&args.a);
    rec.input(&args.b);
    let rows = compare_metrics(&old, &new);
    for r in &rows {
        if r.change_percent.is_none() && !r.old.is_nan() && !r.new.is_nan() {
            rec.warn(format!("{}: change from 0 is undefined", r.metric));
        }
    }
    let csv = rec.output("comparison.csv")?;
    write_comparison_csv(&rows, std::fs::File::create(&csv)?).at(&csv)?;
    rec.artifact(csv);
    let json = rec.output("comparison.json")?;
    write_json(&json, &rows)?;
    rec.artifact(json);
    rec.finish(&ctx.config)
}
