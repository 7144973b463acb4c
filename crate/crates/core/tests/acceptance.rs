//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use songsieve_core::annotations::{
    format_yolo_rows, read_yolo_file, to_yolo, write_yolo_file, Annotation, LabelScheme, YoloBox,
};
use songsieve_core::audio::{synth_clip, ToneBurst, PIPELINE_SAMPLE_RATE_HZ};
use songsieve_core::calibrate::{
    bootstrap_band, confidence_to_logit, fit_logistic, samples_from_detections, sigmoid,
    threshold_for_probability, tp_loss_table, CalibrationSample, LogitGrid, DEFAULT_TARGETS,
};
use songsieve_core::detect::{bbox_to_time, energy_detector, Detection, DetectorParams};
use songsieve_core::evaluate::{
    average_precision_50, detection_metrics, interval_iou, match_detections, percentage_change,
    round_percent,
};
use songsieve_core::spectrogram::{clip_to_image, SpectrogramParams, IMAGE_HEIGHT_PX, IMAGE_WIDTH_PX};
use songsieve_core::split::{plan_split, Subset, SplitTargets};

// Tolerances and limits, fixed here and nowhere else.
const SIGMOID_TOL: f64 = 0.005;
const F1_TOL: f64 = 0.015;
const ROUND_TRIP_TOL_S: f64 = 60.0 / 930.0;
const IOU_GRID_TOL: f64 = 1e-3;
const AP_TOL: f64 = 1e-9;
const PARAM_TOL: f64 = 0.15;
const PREDICT_TOL: f64 = 1e-9;
const E2E_MIN_PRECISION: f64 = 0.9;
const E2E_MIN_RECALL: f64 = 0.9;
const E2E_IOU: f64 = 0.5;
const YOLO_IO_TOL: f64 = 1e-6;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 1

fn threshold_sigmoid() -> Outcome {
    let pairs = [(-2.75, 0.06), (-1.78, 0.14), (-0.58, 0.36), (1.30, 0.79)];
    let mut worst = 0.0f64;
    for (logit, conf) in pairs {
        let diff = (sigmoid(logit) - conf).abs();
        worst = worst.max(diff);
        check(diff <= SIGMOID_TOL, format!("sigmoid({logit}) = {:.4}, listed as {conf}", sigmoid(logit)))?;
    }
    Ok(format!("max |sigmoid - conf| = {worst:.4}"))
}

// ---------------------------------------------------------------- 2

fn comparison_changes() -> Outcome {
    let detector = [196.0, 9.0, 70.0];
    let cases = [
        ([98.0, 6.0, 211.0], [100, 50, -67]),
        ([245.0, 63.0, 135.0], [-20, -86, -48]),
    ];
    for (old, expected) in cases {
        for k in 0..3 {
            let p = percentage_change(detector[k], old[k]).map_err(|e| e.to_string())?;
            check(
                round_percent(p) == expected[k],
                format!("{} -> {}: got {}%, expected {}%", old[k], detector[k], round_percent(p), expected[k]),
            )?;
        }
    }
    Ok("+100 +50 -67 / -20 -86 -48".into())
}

// ---------------------------------------------------------------- 3

const REFERENCE_REPORT: [(&str, f64, f64, f64, usize); 28] = [
    ("Anthus pratensis", 0.16, 1.00, 0.28, 42),
    ("Calandrella brachydactyla", 0.16, 0.07, 0.10, 113),
    ("Carduelis carduelis", 0.00, 0.00, 0.00, 1),
    ("Cettia cetti", 0.60, 0.13, 0.21, 23),
    ("Chloris chloris", 1.00, 0.08, 0.15, 12),
    ("Ciconia ciconia", 0.50, 0.05, 0.10, 19),
    ("Cisticola juncidis", 0.17, 0.14, 0.15, 7),
    ("Sylviidae", 0.33, 0.06, 0.10, 17),
    ("Cyanopica cooki", 0.00, 0.00, 0.00, 3),
    ("Emberiza calandra", 0.56, 0.39, 0.46, 51),
    ("Falco tinnunculus", 0.00, 0.00, 0.00, 2),
    ("Galerida theklae", 0.00, 0.00, 0.00, 3),
    ("Galerida cristata", 0.70, 0.47, 0.56, 30),
    ("Hippolais polyglotta", 0.00, 0.00, 0.00, 4),
    ("Linaria cannabina", 0.00, 0.00, 0.00, 1),
    ("Luscinia megarhynchos", 0.30, 0.38, 0.33, 29),
    ("Melanocorypha calandra", 0.00, 0.00, 0.00, 2),
    ("Merops apiaster", 0.00, 0.00, 0.00, 3),
    ("Milvus migrans", 0.00, 0.00, 0.00, 9),
    ("Motacilla flava", 0.00, 0.00, 0.00, 2),
    ("Parus major", 0.00, 0.00, 0.00, 2),
    ("Passer sp.", 0.00, 0.00, 0.00, 8),
    ("Pica pica", 0.00, 0.00, 0.00, 5),
    ("Saxicola rubicola", 0.47, 0.30, 0.37, 23),
    ("Serinus serinus", 0.00, 0.00, 0.00, 4),
    ("Streptopelia decaocto", 0.33, 0.12, 0.18, 16),
    ("Sturnus sp.", 0.40, 0.43, 0.42, 76),
    ("Turdus merula", 0.73, 0.50, 0.59, 48),
];

fn reference_report_f1() -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (name, p, r, f1, support) in REFERENCE_REPORT {
        if support == 0 || p + r == 0.0 {
            continue;
        }
        let h = 2.0 * p * r / (p + r);
        worst = worst.max((h - f1).abs());
        check((h - f1).abs() <= F1_TOL, format!("{name}: 2PR/(P+R) = {h:.4}, reported F1 {f1}"))?;
        checked += 1;
    }
    // informational: the printed rows do not add up to the printed total
    let total: usize = REFERENCE_REPORT.iter().map(|r| r.4).sum();
    Ok(format!("{checked} rows, max deviation {worst:.4}; row supports sum to {total}"))
}

// ---------------------------------------------------------------- 4

fn yolo_round_trip() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scheme = LabelScheme::binary();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a: f64 = rng.random_range(0.0..60.0);
        let b: f64 = rng.random_range(0.0..60.0);
        let (s, e) = if a <= b { (a, b) } else { (b, a) };
        let ann = Annotation::new("clip", s, e, "Bird");
        let yolo = to_yolo(&ann, 60.0, &scheme).map_err(|e| e.to_string())?;
        // independent route: normalized -> pixels -> seconds
        let (rs, re) = bbox_to_time(&yolo, IMAGE_WIDTH_PX, 60.0);
        let x_px = yolo.x_center * IMAGE_WIDTH_PX as f64;
        let w_px = yolo.x_width * IMAGE_WIDTH_PX as f64;
        let px_to_s = 60.0 / IMAGE_WIDTH_PX as f64;
        let (os, oe) = ((x_px - w_px / 2.0) * px_to_s, (x_px + w_px / 2.0) * px_to_s);
        check(
            (rs - os.clamp(0.0, 60.0)).abs() < 1e-9 && (re - oe.clamp(0.0, 60.0)).abs() < 1e-9,
            format!("bbox_to_time disagrees with the pixel-space conversion for [{s}, {e}]"),
        )?;
        let err = (rs - s).abs().max((re - e).abs());
        worst = worst.max(err);
        check(err <= ROUND_TRIP_TOL_S, format!("[{s}, {e}] came back as [{rs}, {re}]"))?;
    }
    within(t.elapsed(), 1.0)?;
    Ok(format!("1000 annotations, max endpoint error {worst:.2e} s"))
}

// ---------------------------------------------------------------- 5

fn oracle_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi <= lo {
        return 0.0;
    }
    let inter = hi - lo;
    inter / ((a.1 - a.0) + (b.1 - b.0) - inter)
}

/// Lexicographically best IoU sequence (predictions in confidence order,
/// -1 for unmatched) over every one-to-one partial assignment.
fn brute_force_file(preds: &[(f64, f64)], gts: &[(f64, f64)], iou_min: f64) -> usize {
    fn walk(k: usize, preds: &[(f64, f64)], gts: &[(f64, f64)], used: &mut Vec<bool>, iou_min: f64, cur: &mut Vec<f64>, best: &mut Option<Vec<f64>>) {
        if k == preds.len() {
            let better = match best {
                None => true,
                Some(b) => cur.as_slice().partial_cmp(b.as_slice()) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                *best = Some(cur.clone());
            }
            return;
        }
        cur.push(-1.0);
        walk(k + 1, preds, gts, used, iou_min, cur, best);
        cur.pop();
        for j in 0..gts.len() {
            let iou = oracle_iou(preds[k], gts[j]);
            if used[j] || iou < iou_min {
                continue;
            }
            used[j] = true;
            cur.push(iou);
            walk(k + 1, preds, gts, used, iou_min, cur, best);
            cur.pop();
            used[j] = false;
        }
    }
    let mut best = None;
    walk(0, preds, gts, &mut vec![false; gts.len()], iou_min, &mut Vec::new(), &mut best);
    best.map_or(0, |b| b.iter().filter(|v| **v >= 0.0).count())
}

fn random_segment(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let s: f64 = rng.random_range(0.0..10.0);
    (s, s + rng.random_range(0.2..5.0))
}

fn matching_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut total_tp = 0;
    for trial in 0..500 {
        let n_files = rng.random_range(1..=3);
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        let mut expected_tp = 0;
        for f in 0..n_files {
            let file = format!("f{f}");
            let np = rng.random_range(0..=6);
            let ng = rng.random_range(0..=6);
            let mut p: Vec<((f64, f64), f64)> = (0..np).map(|_| (random_segment(&mut rng), rng.random::<f64>())).collect();
            let g: Vec<(f64, f64)> = (0..ng).map(|_| random_segment(&mut rng)).collect();
            for (seg, c) in &p {
                preds.push(Detection::new(file.clone(), seg.0, seg.1, *c));
            }
            for seg in &g {
                gts.push(Annotation::new(file.clone(), seg.0, seg.1, "Bird"));
            }
            p.sort_by(|a, b| b.1.total_cmp(&a.1));
            let segs: Vec<(f64, f64)> = p.iter().map(|x| x.0).collect();
            expected_tp += brute_force_file(&segs, &g, 0.1);
        }
        let m = match_detections(&preds, &gts, 0.1);
        let expected = (expected_tp, preds.len() - expected_tp, gts.len() - expected_tp);
        check(
            (m.tp, m.fp, m.fn_) == expected,
            format!("trial {trial}: got {:?}, oracle {:?}", (m.tp, m.fp, m.fn_), expected),
        )?;
        total_tp += m.tp;
    }

    let mut worst = 0.0f64;
    const N: usize = 10_000;
    for _ in 0..500 {
        let a = random_segment(&mut rng);
        let b = random_segment(&mut rng);
        let lo = a.0.min(b.0);
        let hi = a.1.max(b.1);
        let (mut both, mut either) = (0usize, 0usize);
        for i in 0..N {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / N as f64;
            let ina = a.0 <= x && x < a.1;
            let inb = b.0 <= x && x < b.1;
            both += usize::from(ina && inb);
            either += usize::from(ina || inb);
        }
        let sampled = both as f64 / either as f64;
        let d = (interval_iou(a, b) - sampled).abs();
        worst = worst.max(d);
        check(d <= IOU_GRID_TOL, format!("IoU of {a:?} and {b:?}: {} vs sampled {sampled}", interval_iou(a, b)))?;
    }
    within(t.elapsed(), 30.0)?;
    Ok(format!("500 trials ({total_tp} TPs) agree; IoU grid max error {worst:.1e}"))
}

// ---------------------------------------------------------------- 6

fn simple_greedy_tp(preds: &[&Detection], gts: &[Annotation], iou_min: f64) -> usize {
    let mut tp = 0;
    let mut files: Vec<&str> = preds.iter().map(|p| p.source_id.as_str()).collect();
    files.sort();
    files.dedup();
    for f in files {
        let mut fp: Vec<&&Detection> = preds.iter().filter(|p| p.source_id == f).collect();
        fp.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        let fg: Vec<&Annotation> = gts.iter().filter(|g| g.source_id == f).collect();
        let mut used = vec![false; fg.len()];
        for p in fp {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in fg.iter().enumerate() {
                let iou = oracle_iou((p.start_s, p.end_s), (g.start_s, g.end_s));
                if !used[j] && iou >= iou_min && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
            if let Some((j, _)) = best {
                used[j] = true;
                tp += 1;
            }
        }
    }
    tp
}

/// AP by enumerating every confidence threshold, scoring the surviving
/// detections from scratch, and integrating the precision envelope.
fn enumerated_ap(preds: &[Detection], gts: &[Annotation]) -> f64 {
    if preds.is_empty() || gts.is_empty() {
        return 0.0;
    }
    let mut thresholds: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let kept: Vec<&Detection> = preds.iter().filter(|p| p.confidence >= t).collect();
            let tp = simple_greedy_tp(&kept, gts, 0.5) as f64;
            (tp / gts.len() as f64, tp / kept.len() as f64)
        })
        .collect();
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for k in 0..points.len() {
        let p_interp = points[k..].iter().map(|p| p.1).fold(0.0, f64::max);
        ap += (points[k].0 - prev_r) * p_interp;
        prev_r = points[k].0;
    }
    ap
}

fn ap_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let np = rng.random_range(0..=20);
        let ng = rng.random_range(0..=10);
        let quantized = trial % 2 == 0;
        let preds: Vec<Detection> = (0..np)
            .map(|_| {
                let f = format!("f{}", rng.random_range(0..3));
                let (s, e) = random_segment(&mut rng);
                let c: f64 = rng.random_range(0.01..0.99);
                // half the trials use coarse confidences so ties occur
                let c = if quantized { (c * 10.0).round() / 10.0 } else { c };
                Detection::new(f, s, e, c.max(0.05))
            })
            .collect();
        let gts: Vec<Annotation> = (0..ng)
            .map(|_| {
                let (s, e) = random_segment(&mut rng);
                Annotation::new(format!("f{}", rng.random_range(0..3)), s, e, "Bird")
            })
            .collect();
        let got = average_precision_50(&preds, &gts);
        let want = enumerated_ap(&preds, &gts);
        worst = worst.max((got - want).abs());
        check((got - want).abs() <= AP_TOL, format!("trial {trial}: AP {got} vs enumeration {want}"))?;
    }
    within(t.elapsed(), 10.0)?;
    Ok(format!("100 trials, max |diff| {worst:.1e}"))
}

// ---------------------------------------------------------------- 7

fn calibration_recovery() -> Outcome {
    let t = Instant::now();
    let (b0, b1) = (2.0, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<CalibrationSample> = (0..5000)
        .map(|_| {
            let logit: f64 = rng.random_range(-4.0..4.0);
            let correct = rng.random::<f64>() < sigmoid(b0 + b1 * logit);
            CalibrationSample::new(sigmoid(logit), correct)
        })
        .collect();
    let model = fit_logistic(&samples).map_err(|e| e.to_string())?;
    check(
        (model.intercept - b0).abs() <= PARAM_TOL && (model.slope - b1).abs() <= PARAM_TOL,
        format!("fitted ({:.3}, {:.3}), true ({b0}, {b1})", model.intercept, model.slope),
    )?;
    for p in DEFAULT_TARGETS {
        let (logit, conf) = threshold_for_probability(&model, p).map_err(|e| e.to_string())?;
        check(
            (model.predict(logit) - p).abs() <= PREDICT_TOL,
            format!("predict(logit*) = {} for target {p}", model.predict(logit)),
        )?;
        check((confidence_to_logit(conf) - logit).abs() < 1e-6, "confidence* is not sigmoid(logit*)")?;
    }

    // detections whose correctness follows the same model
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let file = format!("c{}", i % 50);
        let start = (i / 50) as f64 * 2.0;
        preds.push(Detection::new(file.clone(), start, start + 1.0, s.confidence));
        if s.correct {
            gts.push(Annotation::new(file, start, start + 1.0, "Bird"));
        }
    }
    let det_samples = samples_from_detections(&preds, &gts, 0.1);
    let det_model = fit_logistic(&det_samples).map_err(|e| e.to_string())?;
    let table = tp_loss_table(&preds, &gts, &det_model, &DEFAULT_TARGETS, 0.1, None).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = table.rows.iter().map(|r| r.tp_loss_percent).collect();
    check(losses.windows(2).all(|w| w[0] <= w[1]), format!("TP loss not monotone: {losses:?}"))?;
    within(t.elapsed(), 10.0)?;

    let tb = Instant::now();
    let band = bootstrap_band(&samples, 1000, 0.90, &LogitGrid::default(), 42).map_err(|e| e.to_string())?;
    let boot_s = tb.elapsed();
    within(boot_s, 60.0)?;
    check(band.lower.iter().zip(&band.upper).all(|(l, u)| l <= u), "band lower above upper")?;
    Ok(format!(
        "fit ({:.3}, {:.3}); TP loss {:?}; bootstrap 1000 in {:.1} s",
        model.intercept,
        model.slope,
        losses.iter().map(|l| format!("{l:.2}")).collect::<Vec<_>>(),
        boot_s.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 8

fn end_to_end() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = 0.005;
    let params = SpectrogramParams::default();
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut min_snr = f64::INFINITY;
    for c in 0..20 {
        let id = format!("synth{c:02}");
        let n = rng.random_range(2..=4);
        let mut bursts = Vec::new();
        // one burst per 15 s slot, so bursts never touch
        for k in 0..n {
            let slot = 60.0 / n as f64;
            let dur: f64 = rng.random_range(0.3..3.0);
            let start = k as f64 * slot + rng.random_range(0.5..(slot - dur - 0.5));
            let amp: f64 = rng.random_range(0.1..0.25);
            min_snr = min_snr.min(10.0 * (amp * amp / 2.0 / (noise * noise)).log10());
            bursts.push(ToneBurst::new(start, start + dur, rng.random_range(1000.0..8000.0), amp));
            gts.push(Annotation::new(id.clone(), start, start + dur, "Bird"));
        }
        let clip = synth_clip(&bursts, noise, 60.0, PIPELINE_SAMPLE_RATE_HZ, c, id).map_err(|e| e.to_string())?;
        let image = clip_to_image(&clip, &params).map_err(|e| e.to_string())?;
        check(
            (image.width, image.height) == (IMAGE_WIDTH_PX, IMAGE_HEIGHT_PX) && image.pixels.len() == 930 * 462,
            format!("image is {}x{}", image.width, image.height),
        )?;
        preds.extend(energy_detector(&clip, &DetectorParams::default()).map_err(|e| e.to_string())?);
    }
    check(min_snr >= 20.0, format!("fixture SNR {min_snr:.1} dB below 20"))?;
    let m = detection_metrics(&match_detections(&preds, &gts, E2E_IOU));
    check(
        m.precision >= E2E_MIN_PRECISION && m.recall >= E2E_MIN_RECALL,
        format!("precision {:.3}, recall {:.3} (TP {} FP {} FN {})", m.precision, m.recall, m.tp, m.fp, m.fn_),
    )?;
    within(t.elapsed(), 120.0)?;
    Ok(format!(
        "20 clips, {} bursts, 930x462 images; P {:.3} R {:.3} at IoU {E2E_IOU}",
        gts.len(),
        m.precision,
        m.recall
    ))
}

// ---------------------------------------------------------------- 9

fn objective(counts: &BTreeMap<&str, [usize; 3]>, t: [f64; 3]) -> f64 {
    counts
        .values()
        .map(|c| {
            let total: usize = c.iter().sum();
            (0..3).map(|s| (c[s] as f64 / total as f64 - t[s]).abs()).sum::<f64>()
        })
        .sum()
}

fn split_properties() -> Outcome {
    let t = Instant::now();
    let targets = SplitTargets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // exclusivity and count bookkeeping on random multi-label fixtures
    for trial in 0..50 {
        let mut anns = Vec::new();
        for f in 0..rng.random_range(3..40) {
            for _ in 0..rng.random_range(1..6) {
                let label = format!("sp{}", rng.random_range(0..5));
                anns.push(Annotation::new(format!("file{f}"), 0.0, 1.0, label));
            }
        }
        let plan = plan_split(&anns, &targets, trial).map_err(|e| e.to_string())?;
        let files: std::collections::BTreeSet<&str> = anns.iter().map(|a| a.source_id.as_str()).collect();
        check(plan.assignment.len() == files.len(), "not every file assigned exactly once")?;
        let listed: usize = Subset::ALL.iter().map(|s| plan.files_in(*s).len()).sum();
        check(listed == files.len(), "a file is listed in more than one subset")?;
        let mut recount: BTreeMap<String, [usize; 3]> = BTreeMap::new();
        for a in &anns {
            recount.entry(a.label.clone()).or_default()[plan.assignment[&a.source_id].index()] += 1;
        }
        check(recount == plan.per_class_counts, format!("trial {trial}: per-class counts disagree"))?;
    }

    // exactly divisible single-label fixtures
    for (n_files, per_file) in [(10, 1), (20, 3), (30, 2), (50, 1)] {
        let anns: Vec<Annotation> = (0..n_files)
            .flat_map(|f| (0..per_file).map(move |k| Annotation::new(format!("f{f:03}"), k as f64, k as f64 + 1.0, "Turdus merula")))
            .collect();
        let plan = plan_split(&anns, &targets, 42).map_err(|e| e.to_string())?;
        let c = plan.per_class_counts["Turdus merula"];
        let total = n_files * per_file;
        check(
            c == [total * 8 / 10, total / 10, total / 10],
            format!("{n_files} files x {per_file}: got {c:?}"),
        )?;
    }

    // 4-file multi-label fixture against all 3^4 assignments
    let fixture: [(&str, &[(&str, usize)]); 4] = [
        ("a", &[("A", 8)]),
        ("b", &[("A", 1), ("B", 1)]),
        ("c", &[("A", 1), ("B", 1)]),
        ("d", &[("B", 8)]),
    ];
    let anns: Vec<Annotation> = fixture
        .iter()
        .flat_map(|(f, labels)| {
            labels
                .iter()
                .flat_map(move |(l, n)| (0..*n).map(move |_| Annotation::new(*f, 0.0, 1.0, *l)))
        })
        .collect();
    let tarr = [targets.train, targets.validation, targets.test];
    let mut optimum = f64::INFINITY;
    for code in 0..81usize {
        let mut counts: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
        for (i, (_, labels)) in fixture.iter().enumerate() {
            let s = (code / 3usize.pow(i as u32)) % 3;
            for (l, n) in labels.iter() {
                counts.entry(l).or_default()[s] += n;
            }
        }
        optimum = optimum.min(objective(&counts, tarr));
    }
    for seed in 0..10 {
        let plan = plan_split(&anns, &targets, seed).map_err(|e| e.to_string())?;
        let got = plan.total_deviation(&targets);
        check((got - optimum).abs() < 1e-12, format!("seed {seed}: deviation {got}, optimum {optimum}"))?;
    }
    within(t.elapsed(), 5.0)?;
    Ok(format!("exclusive on 50 fixtures; 80/10/10 exact; 4-file optimum {optimum}"))
}

// ---------------------------------------------------------------- 10

fn yolo_format() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scheme = LabelScheme::binary();
    let anns = [Annotation::new("x", 12.0, 15.0, "Bird"), Annotation::new("x", 0.0, 60.0, "Bird")];
    let boxes: Vec<YoloBox> = anns.iter().map(|a| to_yolo(a, 60.0, &scheme)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let text = format_yolo_rows(&boxes);
    check(
        text == "0 0.225000 0.500000 0.050000 1.000000\n0 0.500000 0.500000 1.000000 1.000000\n",
        format!("unexpected rows {text:?}"),
    )?;
    for line in text.lines() {
        let fields: Vec<&str> = line.split(' ').collect();
        check(fields.len() == 5 && fields[0].parse::<usize>().is_ok(), format!("bad row {line:?}"))?;
        for f in &fields[1..] {
            let decimals = f.split_once('.').map(|(_, d)| d.len());
            check(decimals == Some(6), format!("field {f:?} not printed with 6 decimals"))?;
        }
    }

    let empty = dir.path().join("nested/empty.txt");
    write_yolo_file(&[], &empty).map_err(|e| e.to_string())?;
    let len = std::fs::metadata(&empty).map_err(|e| e.to_string())?.len();
    check(len == 0, format!("empty annotation set wrote {len} bytes"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let path = dir.path().join("r.txt");
    for _ in 0..100 {
        let boxes: Vec<YoloBox> = (0..rng.random_range(0..8))
            .map(|_| {
                let w: f64 = rng.random_range(0.0..1.0);
                YoloBox::full_height(rng.random_range(0..30), rng.random_range(w / 2.0..=1.0 - w / 2.0), w)
            })
            .collect();
        write_yolo_file(&boxes, &path).map_err(|e| e.to_string())?;
        let back = read_yolo_file(&path).map_err(|e| e.to_string())?;
        check(back.len() == boxes.len(), "row count changed")?;
        for (a, b) in boxes.iter().zip(&back) {
            let close = a.class_idx == b.class_idx
                && (a.x_center - b.x_center).abs() <= YOLO_IO_TOL
                && (a.y_center - b.y_center).abs() <= YOLO_IO_TOL
                && (a.x_width - b.x_width).abs() <= YOLO_IO_TOL
                && (a.y_height - b.y_height).abs() <= YOLO_IO_TOL;
            check(close, format!("{a:?} read back as {b:?}"))?;
        }
    }
    within(t.elapsed(), 1.0)?;
    Ok("exact row layout, zero-byte empty file, 100 write/read round trips".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("sigmoid consistency of calibration table", threshold_sigmoid),
        ("percentage-change comparison math", comparison_changes),
        ("classification report F1 consistency", reference_report_f1),
        ("YOLO round-trip geometry", yolo_round_trip),
        ("IoU and greedy matching oracle", matching_oracle),
        ("AP50 enumeration oracle", ap_oracle),
        ("calibration recovery", calibration_recovery),
        ("end-to-end synthetic pipeline", end_to_end),
        ("split properties", split_properties),
        ("YOLO format fidelity", yolo_format),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
