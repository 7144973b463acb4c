//! Commands that work on annotations: convert, split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use songsieve_core::annotations::{
    apply_scheme, format_yolo_rows, group_by_source, parse_audacity_labels, read_classes, to_yolo,
    write_annotations_csv, Annotation, CLASSIFIER_EXCLUDED, NO_BIRD_LABEL,
};
use songsieve_core::split::plan_split;

use crate::config::SchemeKind;
use crate::error::{AtPath, CliError, CliResult};
use crate::files::{audio_durations, find_files, load_gt, pick, require, write_text};
use crate::manifest::RunRecorder;
use crate::{ConvertArgs, Context, SplitArgs};

/// Raw annotations plus the label file each source should be written to.
struct Parsed {
    annotations: Vec<Annotation>,
    targets: BTreeMap<String, PathBuf>,
}

fn read_audacity_tree(root: &Path, rec: &mut RunRecorder) -> CliResult<Parsed> {
    let mut annotations = Vec::new();
    let mut targets = BTreeMap::new();
    for f in find_files(root, &["txt"])? {
        let id = f.source_id();
        let text = std::fs::read_to_string(&f.path).at(&f.path)?;
        annotations.extend(parse_audacity_labels(&text, &id).at(&f.path)?);
        if let Some(prev) = targets.insert(id.clone(), f.relative.clone()) {
            return Err(CliError::data(format!(
                "source id {id:?} appears twice ({} and {})",
                prev.display(),
                f.relative.display()
            )));
        }
        rec.input(&f.path);
    }
    Ok(Parsed { annotations, targets })
}

fn read_annotation_csv(path: &Path, rec: &mut RunRecorder) -> CliResult<Parsed> {
    let annotations = load_gt(path)?;
    rec.input(path);
    let targets = group_by_source(&annotations)
        .into_keys()
        .map(|id| {
            let rel = PathBuf::from(format!("{id}.txt"));
            (id, rel)
        })
        .collect();
    Ok(Parsed { annotations, targets })
}

/// Classifier classes present in the data, after remapping.
fn classes_in_data(annotations: &[Annotation], remap: &BTreeMap<String, String>) -> Vec<String> {
    let skip = |l: &str| l.eq_ignore_ascii_case(NO_BIRD_LABEL) || CLASSIFIER_EXCLUDED.contains(&l);
    let set: BTreeSet<String> = annotations
        .iter()
        .filter(|a| !skip(&a.label))
        .map(|a| remap.get(&a.label).cloned().unwrap_or_else(|| a.label.clone()))
        .collect();
    set.into_iter().collect()
}

pub fn convert(ctx: &mut Context, args: ConvertArgs) -> CliResult<PathBuf> {
    if let Some(s) = args.scheme {
        ctx.config.scheme.mode = s;
    }
    if let Some(d) = args.duration {
        ctx.config.evaluation.clip_duration_s = d;
    }
    if args.classes.is_some() {
        ctx.config.scheme.classes_file = args.classes.clone();
    }
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("convert", ctx.output_root.join("convert"));
    let parsed = match (args.annotations, args.labels) {
        (Some(csv), _) => {
            require(&csv, "annotation CSV")?;
            read_annotation_csv(&csv, &mut rec)?
        }
        (None, flag) => {
            let root = pick(flag, &ctx.config.paths.annotation_root, "labels")?;
            require(&root, "labels")?;
            let is_csv = root.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if root.is_file() && is_csv {
                read_annotation_csv(&root, &mut rec)?
            } else {
                read_audacity_tree(&root, &mut rec)?
            }
        }
    };

    let scheme_cfg = &ctx.config.scheme;
    let classes = match scheme_cfg.mode {
        SchemeKind::Binary => Vec::new(),
        SchemeKind::Classifier if !scheme_cfg.classes.is_empty() => scheme_cfg.classes.clone(),
        SchemeKind::Classifier => match &scheme_cfg.classes_file {
            Some(p) => {
                require(p, "classes file")?;
                rec.input(p);
                read_classes(p).at(p)?
            }
            None => classes_in_data(&parsed.annotations, &scheme_cfg.remap),
        },
    };
    let scheme = scheme_cfg.build(&classes)?;
    let mapped = apply_scheme(&parsed.annotations, &scheme)?;

    let durations = match &args.audio {
        Some(a) => {
            for f in find_files(a, &["wav"])? {
                rec.input(&f.path);
            }
            audio_durations(a)?
        }
        None => BTreeMap::new(),
    };
    let default_duration = ctx.config.evaluation.clip_duration_s;

    let groups = group_by_source(&mapped);
    let labels_dir = rec.out_dir().join("labels");
    for (id, rel) in &parsed.targets {
        let duration = durations.get(id).copied().unwrap_or(default_duration);
        let boxes = groups
            .get(id)
            .map(|anns| anns.iter().map(|a| to_yolo(a, duration, &scheme)).collect::<Result<Vec<_>, _>>())
            .transpose()
            .map_err(|e| CliError::from(e).context(format!("source {id}")))?
            .unwrap_or_default();
        let dest = labels_dir.join(rel).with_extension("txt");
        write_text(&dest, &format_yolo_rows(&boxes))?;
        rec.artifact(dest);
    }

    let csv_path = rec.output("annotations.csv")?;
    write_annotations_csv(&mapped, std::fs::File::create(&csv_path)?).at(&csv_path)?;
    rec.artifact(csv_path);
    let classes_path = rec.output("classes.txt")?;
    let mut listing = scheme.classes().join("\n");
    listing.push('\n');
    write_text(&classes_path, &listing)?;
    rec.artifact(classes_path);
    rec.finish(&ctx.config)
}

pub fn split(ctx: &mut Context, args: SplitArgs) -> CliResult<PathBuf> {
    let cfg = &mut ctx.config.split;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.train {
        cfg.train = v;
    }
    if let Some(v) = args.validation {
        cfg.validation = v;
    }
    if let Some(v) = args.test {
        cfg.test = v;
    }
    ctx.config.validate()?;

    let mut rec = RunRecorder::new("split", ctx.output_root.join("split"));
    let annotations = load_gt(&args.annotations)?;
    rec.input(&args.annotations);
    rec.set_seed(ctx.config.split.seed);
    let plan = plan_split(&annotations, &ctx.config.split.targets(), ctx.config.split.seed)?;
    for w in &plan.warnings {
        rec.warn(w.clone());
    }
    let assignment = rec.output("split.csv")?;
    plan.write_assignment_csv(std::fs::File::create(&assignment)?).at(&assignment)?;
    rec.artifact(assignment);
    let counts = rec.output("split_counts.csv")?;
    plan.write_counts_csv(std::fs::File::create(&counts)?).at(&counts)?;
    rec.artifact(counts);
    rec.finish(&ctx.config)
}
