//! Training-set augmentation: additive Gaussian noise at a target SNR,
//! intensity scaling, and selection of background-only negatives from an
//! external sound collection.

use std::io::Read;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{self, clamp_sample, AudioClip, AudioError};

/// Crossfade used when looping short background clips.
pub const TILE_CROSSFADE_S: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("clip {0:?} is silent; SNR is undefined")]
    SilentClip(String),
    #[error("need {needed} background items but only {available} remain after exclusion")]
    InsufficientBackgroundItems { needed: usize, available: usize },
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("background metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub snr_db_range: (f64, f64),
    pub gain_db_range: (f64, f64),
    /// Share of the final training set made of background-only items,
    /// i.e. `b / (n_train + b)`.
    pub background_fraction: f64,
    /// Case-insensitive label substrings removed from the background set.
    pub excluded_background_labels: Vec<String>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            snr_db_range: (10.0, 30.0),
            gain_db_range: (-6.0, 6.0),
            background_fraction: 0.25,
            excluded_background_labels: vec!["bird".into()],
            seed: audio::DEFAULT_SEED,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidConfig(m));
        let f = self.background_fraction;
        if !(0.0..1.0).contains(&f) {
            return bad(format!("background_fraction must be in [0, 1), got {f}"));
        }
        let (lo, hi) = self.snr_db_range;
        if !(lo <= hi) {
            return bad(format!("snr_db_range ({lo}, {hi}) is not ordered"));
        }
        let (lo, hi) = self.gain_db_range;
        if !(lo <= hi) {
            return bad(format!("gain_db_range ({lo}, {hi}) is not ordered"));
        }
        Ok(())
    }
}

/// Add white Gaussian noise at `snr_db` relative to the clip's own power.
/// `f64::INFINITY` disables the noise.
pub fn add_noise(clip: &AudioClip, snr_db: f64, seed: u64) -> Result<AudioClip, AugmentError> {
    if snr_db == f64::INFINITY {
        return Ok(clip.clone());
    }
    let power = clip.power();
    if power <= 0.0 {
        return Err(AugmentError::SilentClip(clip.source_id.clone()));
    }
    let noise_power = power / 10f64.powf(snr_db / 10.0);
    let normal = Normal::new(0.0, noise_power.sqrt())
        .map_err(|e| AugmentError::InvalidConfig(format!("snr {snr_db} dB: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = clip
        .samples
        .iter()
        .map(|&s| clamp_sample(f64::from(s) + normal.sample(&mut rng)))
        .collect();
    Ok(clip.with_samples(samples))
}

pub fn scale_intensity(clip: &AudioClip, gain_db: f64) -> AudioClip {
    let gain = 10f64.powf(gain_db / 20.0);
    clip.with_samples(
        clip.samples
            .iter()
            .map(|&s| clamp_sample(f64::from(s) * gain))
            .collect(),
    )
}

/// Parameters drawn for one augmented copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    pub snr_db: f64,
    pub gain_db: f64,
    pub noise_seed: u64,
}

/// Draw noise and gain settings for item `index` of a manifest.
pub fn draw_augmentation(config: &AugmentConfig, index: u64) -> AugmentDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);
    let pick = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    };
    let snr_db = pick(&mut rng, config.snr_db_range);
    let gain_db = pick(&mut rng, config.gain_db_range);
    AugmentDraw {
        snr_db,
        gain_db,
        noise_seed: rng.random(),
    }
}

/// Noise then intensity change, as drawn by [`draw_augmentation`].
pub fn augment_clip(clip: &AudioClip, draw: &AugmentDraw) -> Result<AudioClip, AugmentError> {
    let noisy = add_noise(clip, draw.snr_db, draw.noise_seed)?;
    Ok(scale_intensity(&noisy, draw.gain_db))
}

/// An entry of the external background collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundItem {
    pub path: PathBuf,
    pub label: String,
}

impl BackgroundItem {
    pub fn new(path: impl Into<PathBuf>, label: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            label: label.into(),
        }
    }
}

/// Read a background metadata CSV. The file column is `filename`; the label
/// column is `label` or, for ESC-50 style metadata, `category`. Paths are
/// resolved against `audio_dir`.
pub fn read_background_metadata<R: Read>(
    reader: R,
    audio_dir: &Path,
) -> Result<Vec<BackgroundItem>, AugmentError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let file_col = col("filename")
        .ok_or_else(|| AugmentError::Metadata("missing `filename` column".into()))?;
    let label_col = col("label")
        .or_else(|| col("category"))
        .ok_or_else(|| AugmentError::Metadata("missing `label` or `category` column".into()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let (Some(file), Some(label)) = (rec.get(file_col), rec.get(label_col)) else {
            return Err(AugmentError::Metadata(format!("row {} is short", i + 2)));
        };
        out.push(BackgroundItem::new(audio_dir.join(file), label));
    }
    Ok(out)
}

/// Number of background items `b` such that `b / (n_train + b)` is closest
/// to `fraction`.
pub fn background_count(n_train: usize, fraction: f64) -> usize {
    (fraction * n_train as f64 / (1.0 - fraction)).round() as usize
}

pub fn is_excluded(label: &str, excluded: &[String]) -> bool {
    let label = label.to_lowercase();
    excluded
        .iter()
        .any(|e| !e.is_empty() && label.contains(&e.to_lowercase()))
}

/// Choose the background negatives to add to a training set of `n_train`
/// positive items. Returned in manifest order.
pub fn mix_background_set(
    n_train: usize,
    background_items: &[BackgroundItem],
    config: &AugmentConfig,
) -> Result<Vec<BackgroundItem>, AugmentError> {
    config.validate()?;
    if n_train == 0 {
        return Err(AugmentError::InvalidConfig("n_train must be positive".into()));
    }
    let eligible: Vec<&BackgroundItem> = background_items
        .iter()
        .filter(|item| !is_excluded(&item.label, &config.excluded_background_labels))
        .collect();
    let needed = background_count(n_train, config.background_fraction);
    if needed > eligible.len() {
        return Err(AugmentError::InsufficientBackgroundItems {
            needed,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), needed).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| eligible[i].clone()).collect())
}

/// Loop or trim `clip` to exactly `duration_s`, crossfading linearly over
/// `crossfade_s` at each seam.
pub fn tile_to_length(clip: &AudioClip, duration_s: f64, crossfade_s: f64) -> Result<AudioClip, AugmentError> {
    if clip.is_empty() {
        return Err(AugmentError::Audio(AudioError::EmptyAudio));
    }
    let sr = f64::from(clip.sample_rate_hz);
    let target = (duration_s * sr).round() as usize;
    let n = clip.len();
    if n >= target {
        return Ok(clip.with_samples(clip.samples[..target].to_vec()));
    }
    let fade = ((crossfade_s * sr).round() as usize).min(n / 2);
    let stride = n - fade;
    let mut out = vec![0.0f32; target];
    let mut pos = 0usize;
    let mut first = true;
    while pos < target {
        for (j, &s) in clip.samples.iter().enumerate() {
            let idx = pos + j;
            if idx >= target {
                break;
            }
            if !first && j < fade {
                let w = (j as f64 + 0.5) / fade as f64;
                out[idx] = clamp_sample(f64::from(out[idx]) * (1.0 - w) + f64::from(s) * w);
            } else {
                out[idx] = s;
            }
        }
        first = false;
        pos += stride;
    }
    Ok(clip.with_samples(out))
}

/// Bring a background clip to the pipeline rate and clip length.
pub fn prepare_background_clip(
    clip: &AudioClip,
    sample_rate_hz: u32,
    duration_s: f64,
) -> Result<AudioClip, AugmentError> {
    let resampled = audio::resample(clip, sample_rate_hz)?;
    tile_to_length(&resampled, duration_s, TILE_CROSSFADE_S)
}
