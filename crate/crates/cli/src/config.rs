//! Pipeline configuration: one TOML document with a section per stage.
//! Every field has a default, so an empty file (or no file) is valid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use songsieve_core::annotations::{LabelScheme, CLIP_DURATION_S};
use songsieve_core::audio::DEFAULT_SEED;
use songsieve_core::augment::AugmentConfig;
use songsieve_core::calibrate::{LogitGrid, DEFAULT_LEVEL, DEFAULT_N_BOOT, DEFAULT_TARGETS};
use songsieve_core::detect::DetectorParams;
use songsieve_core::evaluate::{WindowMode, WindowParams, DEFAULT_IOU_MIN, DEFAULT_WINDOW_S};
use songsieve_core::spectrogram::{SpectrogramParams, IMAGE_WIDTH_PX};
use songsieve_core::split::SplitTargets;

use crate::error::{CliError, CliResult};

pub const DEFAULT_OUTPUT_ROOT: &str = "songsieve-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Worker threads for per-file stages; unset means all cores.
    pub workers: Option<usize>,
    pub paths: Paths,
    pub spectrogram: SpectrogramParams,
    pub scheme: SchemeConfig,
    pub split: SplitConfig,
    pub augment: AugmentConfig,
    pub detector: DetectorConfig,
    pub evaluation: EvaluationConfig,
    pub calibration: CalibrationConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub audio_root: Option<PathBuf>,
    pub annotation_root: Option<PathBuf>,
    pub output_root: Option<PathBuf>,
    pub background_dir: Option<PathBuf>,
    pub background_metadata: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    #[default]
    Binary,
    Classifier,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub mode: SchemeKind,
    /// Classifier classes; when empty they are read from `classes_file` or
    /// taken from the labels present in the data.
    pub classes: Vec<String>,
    pub classes_file: Option<PathBuf>,
    /// Raw label to class, applied before the keep/drop rules.
    pub remap: BTreeMap<String, String>,
}

impl SchemeConfig {
    pub fn build(&self, classes: &[String]) -> CliResult<LabelScheme> {
        let mut scheme = match self.mode {
            SchemeKind::Binary => LabelScheme::binary(),
            SchemeKind::Classifier => LabelScheme::classifier(classes.iter().cloned())?,
        };
        for (raw, to) in &self.remap {
            scheme = scheme.with_remap(raw.clone(), to.clone())?;
        }
        scheme.validate()?;
        Ok(scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let t = SplitTargets::default();
        Self {
            train: t.train,
            validation: t.validation,
            test: t.test,
            seed: DEFAULT_SEED,
        }
    }
}

impl SplitConfig {
    pub fn targets(&self) -> SplitTargets {
        SplitTargets {
            train: self.train,
            validation: self.validation,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorSource {
    #[default]
    Baseline,
    Ingest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub source: DetectorSource,
    /// Detections file or directory read when `source = "ingest"`.
    pub ingest_path: Option<PathBuf>,
    /// Image width and clip length used to turn YOLO boxes into seconds.
    pub image_width_px: u32,
    pub clip_duration_s: f64,
    pub band_hz: (f64, f64),
    pub frame_s: f64,
    pub hop_s: f64,
    pub k_mad: f64,
    pub min_dur_s: f64,
    pub merge_gap_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let p = DetectorParams::default();
        Self {
            source: DetectorSource::Baseline,
            ingest_path: None,
            image_width_px: IMAGE_WIDTH_PX,
            clip_duration_s: CLIP_DURATION_S,
            band_hz: p.band_hz,
            frame_s: p.frame_s,
            hop_s: p.hop_s,
            k_mad: p.k_mad,
            min_dur_s: p.min_dur_s,
            merge_gap_s: p.merge_gap_s,
        }
    }
}

impl DetectorConfig {
    pub fn params(&self) -> DetectorParams {
        DetectorParams {
            band_hz: self.band_hz,
            frame_s: self.frame_s,
            hop_s: self.hop_s,
            k_mad: self.k_mad,
            min_dur_s: self.min_dur_s,
            merge_gap_s: self.merge_gap_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub iou_min: f64,
    /// Detections below this confidence are discarded before scoring.
    pub confidence_threshold: f64,
    pub window_s: f64,
    pub window_mode: WindowMode,
    pub iou_floor: f64,
    /// Clip length assumed for files whose audio is not available.
    pub clip_duration_s: f64,
    /// Minimum confidence for a prediction to label an annotation.
    pub align_min_confidence: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let w = WindowParams::default();
        Self {
            iou_min: DEFAULT_IOU_MIN,
            confidence_threshold: 0.15,
            window_s: DEFAULT_WINDOW_S,
            window_mode: w.mode,
            iou_floor: w.iou_floor,
            clip_duration_s: CLIP_DURATION_S,
            align_min_confidence: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub targets: Vec<f64>,
    /// Bootstrap replicates; 0 skips the band.
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
    /// Round inverted thresholds half up to this many decimals.
    pub round_decimals: Option<u32>,
    pub plot: bool,
    pub grid: LogitGrid,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            targets: DEFAULT_TARGETS.to_vec(),
            n_boot: DEFAULT_N_BOOT,
            level: DEFAULT_LEVEL,
            seed: DEFAULT_SEED,
            round_decimals: None,
            plot: false,
            grid: LogitGrid::default(),
        }
    }
}

fn in_unit(name: &str, v: f64, closed_low: bool, closed_high: bool) -> CliResult<()> {
    let lo_ok = if closed_low { v >= 0.0 } else { v > 0.0 };
    let hi_ok = if closed_high { v <= 1.0 } else { v < 1.0 };
    if lo_ok && hi_ok {
        Ok(())
    } else {
        Err(CliError::invalid(format!("{name} = {v} is out of range")))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> CliResult<()> {
        if self.workers == Some(0) {
            return Err(CliError::invalid("workers must be at least 1"));
        }
        self.spectrogram.validate()?;
        self.split.targets().validate()?;
        self.augment.validate()?;
        self.detector.params().validate()?;
        if self.detector.image_width_px == 0 || !(self.detector.clip_duration_s > 0.0) {
            return Err(CliError::invalid("detector image width and clip duration must be positive"));
        }
        let e = &self.evaluation;
        in_unit("evaluation.iou_min", e.iou_min, false, true)?;
        in_unit("evaluation.confidence_threshold", e.confidence_threshold, true, true)?;
        in_unit("evaluation.iou_floor", e.iou_floor, true, true)?;
        in_unit("evaluation.align_min_confidence", e.align_min_confidence, true, true)?;
        if !(e.window_s > 0.0 && e.clip_duration_s > 0.0) {
            return Err(CliError::invalid("evaluation window and clip duration must be positive"));
        }
        let c = &self.calibration;
        if c.targets.is_empty() {
            return Err(CliError::invalid("calibration.targets is empty"));
        }
        for &t in &c.targets {
            in_unit("calibration target", t, false, false)?;
        }
        in_unit("calibration.level", c.level, false, false)?;
        if c.grid.points < 2 || !(c.grid.end > c.grid.start) {
            return Err(CliError::invalid("calibration.grid needs at least 2 points over a non-empty range"));
        }
        Ok(())
    }

    pub fn output_root(&self) -> PathBuf {
        self.paths
            .output_root
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
        assert_eq!(c.spectrogram.out_width_px, 930);
        assert_eq!(c.evaluation.iou_min, 0.1);
        assert_eq!(c.evaluation.window_s, 3.0);
        assert_eq!(c.evaluation.confidence_threshold, 0.15);
    }

    #[test]
    fn sections_override_fields() {
        let c: PipelineConfig = toml::from_str(
            r#"
            workers = 2
            [paths]
            output_root = "runs"
            [split]
            seed = 7
            [detector]
            k_mad = 4.5
            band_hz = [1000.0, 8000.0]
            [evaluation]
            window_mode = "annotation"
            [calibration]
            targets = [0.5, 0.9]
            round_decimals = 2
            "#,
        )
        .unwrap();
        assert_eq!(c.workers, Some(2));
        assert_eq!(c.output_root(), PathBuf::from("runs"));
        assert_eq!(c.split.seed, 7);
        assert_eq!(c.detector.params().band_hz, (1000.0, 8000.0));
        assert_eq!(c.evaluation.window_mode, WindowMode::Annotation);
        assert_eq!(c.calibration.round_decimals, Some(2));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[split]\ntrian = 0.8\n").is_err());
    }

    #[test]
    fn ranges_are_checked() {
        let mut c = PipelineConfig::default();
        c.split.train = 0.9;
        assert!(matches!(c.validate(), Err(CliError::Validation(_))));
        let mut c = PipelineConfig::default();
        c.calibration.targets = vec![1.0];
        assert!(c.validate().is_err());
    }
}
