//! Commands that read audio: spectrogram, augment, detect.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use songsieve_core::annotations::{mirror_path, read_classes, CLIP_DURATION_S};
use songsieve_core::audio::{load_wav, resample, write_wav, AudioClip, PIPELINE_SAMPLE_RATE_HZ};
use songsieve_core::augment::{
    add_noise, draw_augmentation, mix_background_set, prepare_background_clip, read_background_metadata,
    scale_intensity, AugmentError,
};
use songsieve_core::detect::{energy_detector, write_detections_csv, Detection, YoloIngest};
use songsieve_core::split::{read_assignment_csv, Subset};

use crate::config::DetectorSource;
use crate::error::{AtPath, CliError, CliResult};
use crate::files::{find_files, load_detections, pick, require, write_text, Found};
use crate::manifest::RunRecorder;
use crate::{AugmentArgs, Context, DetectArgs, SpectrogramArgs};

fn load_pipeline_clip(path: &Path) -> CliResult<AudioClip> {
    let clip = load_wav(path).at(path)?;
    if clip.sample_rate_hz == PIPELINE_SAMPLE_RATE_HZ {
        Ok(clip)
    } else {
        resample(&clip, PIPELINE_SAMPLE_RATE_HZ).at(path)
    }
}

pub fn spectrogram(ctx: &mut Context, args: SpectrogramArgs) -> CliResult<PathBuf> {
    let params = &mut ctx.config.spectrogram;
    if let Some(v) = args.n_fft {
        params.n_fft = v;
    }
    if let Some(v) = args.hop {
        params.hop = v;
    }
    if let Some(v) = args.fmin {
        params.fmin_hz = v;
    }
    if let Some(v) = args.fmax {
        params.fmax_hz = v;
    }
    let audio = pick(args.audio, &ctx.config.paths.audio_root, "audio input")?;
    ctx.config.paths.audio_root = Some(audio.clone());
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("spectrogram", ctx.output_root.join("spectrogram"));
    let files = find_files(&audio, &["wav"])?;
    if files.is_empty() {
        return Err(CliError::data(format!("no WAV files under {}", audio.display())));
    }
    let images_dir = rec.out_dir().join("images");
    let params = ctx.config.spectrogram.clone();
    let written: Vec<(PathBuf, PathBuf)> = ctx.pool()?.install(|| {
        files
            .par_iter()
            .map(|f| -> CliResult<(PathBuf, PathBuf)> {
                let clip = load_pipeline_clip(&f.path)?;
                let image = songsieve_core::spectrogram::clip_to_image(&clip, &params).at(&f.path)?;
                let png = mirror_path(Path::new(""), &f.relative, &images_dir, "png");
                if let Some(parent) = png.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                image.write_png(&png).at(&png)?;
                let sidecar = png.with_extension("json");
                image.write_sidecar(clip.sample_rate_hz, &sidecar).at(&sidecar)?;
                Ok((png, sidecar))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    for f in &files {
        rec.input(&f.path);
    }
    for (png, sidecar) in written {
        rec.artifact(png);
        rec.artifact(sidecar);
    }
    rec.finish(&ctx.config)
}

/// Positive training files: every WAV, or only those the split puts in train.
fn training_files(audio: &Path, split: Option<&Path>, rec: &mut RunRecorder) -> CliResult<Vec<Found>> {
    let files = find_files(audio, &["wav"])?;
    let Some(split) = split else {
        return Ok(files);
    };
    require(split, "split file")?;
    let assignment = read_assignment_csv(std::fs::File::open(split)?).at(split)?;
    rec.input(split);
    Ok(files
        .into_iter()
        .filter(|f| assignment.get(&f.source_id()) == Some(&Subset::Train))
        .collect())
}

struct AugmentRow {
    output: String,
    source: String,
    kind: &'static str,
    snr_db: String,
    gain_db: String,
    label: String,
}

pub fn augment(ctx: &mut Context, args: AugmentArgs) -> CliResult<PathBuf> {
    let cfg = &mut ctx.config.augment;
    if let Some(f) = args.fraction {
        cfg.background_fraction = f;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.background_dir.is_some() {
        ctx.config.paths.background_dir = args.background_dir.clone();
    }
    if args.background_metadata.is_some() {
        ctx.config.paths.background_metadata = args.background_metadata.clone();
    }
    let audio = pick(args.audio, &ctx.config.paths.audio_root, "audio input")?;
    ctx.config.paths.audio_root = Some(audio.clone());
    ctx.config.validate()?;
    if let Some(l) = &args.labels {
        require(l, "label directory")?;
    }

    let mut rec = RunRecorder::new("augment", ctx.output_root.join("augment"));
    rec.set_seed(ctx.config.augment.seed);
    let positives = training_files(&audio, args.split.as_deref(), &mut rec)?;
    if positives.is_empty() {
        return Err(CliError::data("no training audio to augment"));
    }
    let out_audio = rec.out_dir().join("audio");
    let out_labels = rec.out_dir().join("labels");
    let config = ctx.config.augment.clone();

    let results: Vec<(AugmentRow, PathBuf, Option<String>)> = ctx.pool()?.install(|| {
        positives
            .par_iter()
            .enumerate()
            .map(|(i, f)| -> CliResult<(AugmentRow, PathBuf, Option<String>)> {
                let clip = load_pipeline_clip(&f.path)?;
                let draw = draw_augmentation(&config, i as u64);
                let mut warning = None;
                let noisy = match add_noise(&clip, draw.snr_db, draw.noise_seed) {
                    Ok(c) => c,
                    Err(AugmentError::SilentClip(_)) => {
                        warning = Some(format!("{} is silent; noise skipped", f.path.display()));
                        clip.clone()
                    }
                    Err(e) => return Err(CliError::from(e)),
                };
                let out = scale_intensity(&noisy, draw.gain_db);
                let dest = mirror_path(Path::new(""), &f.relative, &out_audio, "wav");
                if let Some(parent) = dest.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                write_wav(&out, &dest).at(&dest)?;
                let row = AugmentRow {
                    output: dest.to_string_lossy().into_owned(),
                    source: f.path.to_string_lossy().into_owned(),
                    kind: "augmented",
                    snr_db: format!("{:.3}", draw.snr_db),
                    gain_db: format!("{:.3}", draw.gain_db),
                    label: String::new(),
                };
                Ok((row, dest, warning))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;

    let mut rows = Vec::new();
    for (f, (row, dest, warning)) in positives.iter().zip(results) {
        rec.input(&f.path);
        rec.artifact(dest);
        if let Some(w) = warning {
            rec.warn(w);
        }
        rows.push(row);
        if let Some(labels) = &args.labels {
            let src = mirror_path(Path::new(""), &f.relative, labels, "txt");
            if src.exists() {
                let dst = mirror_path(Path::new(""), &f.relative, &out_labels, "txt");
                write_text(&dst, &std::fs::read_to_string(&src).at(&src)?)?;
                rec.input(&src);
                rec.artifact(dst);
            } else {
                rec.warn(format!("no label file {} for {}", src.display(), f.path.display()));
            }
        }
    }

    if let Some(meta) = ctx.config.paths.background_metadata.clone() {
        require(&meta, "background metadata")?;
        let bg_dir = match &ctx.config.paths.background_dir {
            Some(d) => d.clone(),
            None => meta.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        let items = read_background_metadata(std::fs::File::open(&meta)?, &bg_dir).at(&meta)?;
        rec.input(&meta);
        let chosen = mix_background_set(positives.len(), &items, &config)?;
        let out_bg = rec.out_dir().join("background");
        let written: Vec<(PathBuf, PathBuf)> = ctx.pool()?.install(|| {
            chosen
                .par_iter()
                .map(|item| -> CliResult<(PathBuf, PathBuf)> {
                    let clip = load_wav(&item.path).at(&item.path)?;
                    let prepared = prepare_background_clip(&clip, PIPELINE_SAMPLE_RATE_HZ, CLIP_DURATION_S).at(&item.path)?;
                    let stem = item.path.file_stem().map(PathBuf::from).unwrap_or_default();
                    let wav = out_bg.join(&stem).with_extension("wav");
                    std::fs::create_dir_all(&out_bg)?;
                    write_wav(&prepared, &wav).at(&wav)?;
                    let label = out_labels.join("background").join(&stem).with_extension("txt");
                    write_text(&label, "")?;
                    Ok((wav, label))
                })
                .collect::<CliResult<Vec<_>>>()
        })?;
        for (item, (wav, label)) in chosen.iter().zip(written) {
            rec.input(&item.path);
            rows.push(AugmentRow {
                output: wav.to_string_lossy().into_owned(),
                source: item.path.to_string_lossy().into_owned(),
                kind: "background",
                snr_db: String::new(),
                gain_db: String::new(),
                label: item.label.clone(),
            });
            rec.artifact(wav);
            rec.artifact(label);
        }
    }

    let mut table = String::from("output,source,kind,snr_db,gain_db,label\n");
    let strip = |p: &str| {
        Path::new(p)
            .strip_prefix(rec.out_dir())
            .map(|r| r.to_string_lossy().into_owned())
            .unwrap_or_else(|_| p.to_string())
    };
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&strip(&r.output)),
            csv_field(&r.source),
            r.kind,
            r.snr_db,
            r.gain_db,
            csv_field(&r.label)
        ));
    }
    let list = rec.output("augment.csv")?;
    write_text(&list, &table)?;
    rec.artifact(list);
    rec.finish(&ctx.config)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn detect(ctx: &mut Context, args: DetectArgs) -> CliResult<PathBuf> {
    let det = &mut ctx.config.detector;
    if let Some(v) = args.k_mad {
        det.k_mad = v;
    }
    if let Some(v) = args.min_dur {
        det.min_dur_s = v;
    }
    if let Some(v) = args.merge_gap {
        det.merge_gap_s = v;
    }
    if let Some(p) = &args.ingest {
        det.source = DetectorSource::Ingest;
        det.ingest_path = Some(p.clone());
    } else if args.audio.is_some() {
        det.source = DetectorSource::Baseline;
    }
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("detect", ctx.output_root.join("detect"));
    let mut detections: Vec<Detection> = match ctx.config.detector.source {
        DetectorSource::Ingest => {
            let path = pick(None, &ctx.config.detector.ingest_path, "detections to ingest")?;
            let classes = match &args.classes {
                Some(c) => {
                    require(c, "classes file")?;
                    rec.input(c);
                    Some(read_classes(c).at(c)?)
                }
                None => None,
            };
            let opts = YoloIngest {
                image_width_px: ctx.config.detector.image_width_px,
                clip_duration_s: ctx.config.detector.clip_duration_s,
                classes,
                ..YoloIngest::new("")
            };
            for f in find_files(&path, &["csv", "txt"])? {
                rec.input(&f.path);
            }
            load_detections(&path, Some(&opts))?
        }
        DetectorSource::Baseline => {
            let audio = pick(args.audio, &ctx.config.paths.audio_root, "audio input")?;
            ctx.config.paths.audio_root = Some(audio.clone());
            let files = find_files(&audio, &["wav"])?;
            let params = ctx.config.detector.params();
            let per_file: Vec<Vec<Detection>> = ctx.pool()?.install(|| {
                files
                    .par_iter()
                    .map(|f| -> CliResult<Vec<Detection>> {
                        let clip = load_pipeline_clip(&f.path)?;
                        energy_detector(&clip, &params).at(&f.path)
                    })
                    .collect::<CliResult<Vec<_>>>()
            })?;
            for f in &files {
                rec.input(&f.path);
            }
            per_file.into_iter().flatten().collect()
        }
    };
    detections.sort_by(|a, b| {
        a.source_id
            .cmp(&b.source_id)
            .then(a.start_s.total_cmp(&b.start_s))
            .then(b.confidence.total_cmp(&a.confidence))
    });
    let out = rec.output("detections.csv")?;
    write_detections_csv(&detections, std::fs::File::create(&out)?).at(&out)?;
    rec.artifact(out);
    rec.finish(&ctx.config)
}
