//! dB-scaled STFT magnitudes and their rendering as fixed-size grayscale
//! images with a logarithmic frequency axis.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;

/// Width of the detector input image in pixels.
pub const IMAGE_WIDTH_PX: u32 = 930;
/// Height of the detector input image in pixels.
pub const IMAGE_HEIGHT_PX: u32 = 462;

#[derive(Debug, thiserror::Error)]
pub enum SpectrogramError {
    #[error("clip has {samples} samples, fewer than the {n_fft}-sample window")]
    ClipTooShort { samples: usize, n_fft: usize },
    #[error("invalid spectrogram parameters: {0}")]
    InvalidParams(String),
    #[error("empty spectrogram matrix")]
    EmptyMatrix,
    #[error("PNG encoding failed: {0}")]
    Encode(#[from] png::EncodingError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    fn coefficients(self, n: usize) -> Vec<f64> {
        use std::f64::consts::PI;
        // periodic windows, the usual choice for spectral analysis
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n as f64;
                match self {
                    Self::Hann => 0.5 - 0.5 * phase.cos(),
                    Self::Hamming => 0.54 - 0.46 * phase.cos(),
                    Self::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramParams {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub db_floor: f64,
    pub out_width_px: u32,
    pub out_height_px: u32,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            window: WindowKind::Hann,
            fmin_hz: 1.0,
            fmax_hz: 16_000.0,
            db_floor: -80.0,
            out_width_px: IMAGE_WIDTH_PX,
            out_height_px: IMAGE_HEIGHT_PX,
        }
    }
}

impl SpectrogramParams {
    pub fn validate(&self) -> Result<(), SpectrogramError> {
        let bad = |msg: String| Err(SpectrogramError::InvalidParams(msg));
        if self.hop == 0 || self.n_fft < self.hop {
            return bad(format!("need n_fft >= hop > 0, got {} / {}", self.n_fft, self.hop));
        }
        if !(self.fmin_hz > 0.0 && self.fmin_hz < self.fmax_hz) {
            return bad(format!(
                "need 0 < fmin < fmax, got {} / {}",
                self.fmin_hz, self.fmax_hz
            ));
        }
        if !(self.db_floor < 0.0) {
            return bad(format!("db_floor must be negative, got {}", self.db_floor));
        }
        if self.out_width_px == 0 || self.out_height_px < 2 {
            return bad(format!(
                "image must be at least 1x2 pixels, got {}x{}",
                self.out_width_px, self.out_height_px
            ));
        }
        Ok(())
    }

    /// Display band after clamping to what the STFT can resolve: fmin is
    /// raised to the first positive bin and fmax lowered to Nyquist.
    pub fn effective_band(&self, sample_rate_hz: u32) -> Result<(f64, f64), SpectrogramError> {
        let sr = f64::from(sample_rate_hz);
        let fmin = self.fmin_hz.max(sr / self.n_fft as f64);
        let fmax = self.fmax_hz.min(sr / 2.0);
        if fmin >= fmax {
            return Err(SpectrogramError::InvalidParams(format!(
                "empty display band [{fmin}, {fmax}] Hz at {sample_rate_hz} Hz"
            )));
        }
        Ok((fmin, fmax))
    }

    /// Center frequency of image row `row` (row 0 is the top, highest frequency).
    pub fn row_frequency(&self, row: u32, fmin: f64, fmax: f64) -> f64 {
        let h = f64::from(self.out_height_px);
        let frac = (h - 1.0 - f64::from(row)) / (h - 1.0);
        fmin * (fmax / fmin).powf(frac)
    }
}

/// Frames × bins grid of magnitudes in dB relative to the loudest cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramMatrix {
    /// Row-major, `n_frames * n_bins`.
    pub values: Vec<f32>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_times_s: Vec<f64>,
    pub bin_freqs_hz: Vec<f64>,
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub hop: usize,
}

impl SpectrogramMatrix {
    pub fn get(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    /// Bin with the largest summed magnitude over all frames.
    pub fn peak_bin(&self) -> usize {
        let mut sums = vec![0.0f64; self.n_bins];
        for f in 0..self.n_frames {
            for (s, &v) in sums.iter_mut().zip(self.frame(f)) {
                *s += f64::from(v);
            }
        }
        sums.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best })
            .0
    }
}

pub fn compute_stft_db(
    clip: &AudioClip,
    params: &SpectrogramParams,
) -> Result<SpectrogramMatrix, SpectrogramError> {
    params.validate()?;
    let n = clip.samples.len();
    let n_fft = params.n_fft;
    if n < n_fft {
        return Err(SpectrogramError::ClipTooShort { samples: n, n_fft });
    }
    let n_frames = (n - n_fft) / params.hop + 1;
    let n_bins = n_fft / 2 + 1;
    let sr = f64::from(clip.sample_rate_hz);

    let window = params.window.coefficients(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut mags = Vec::with_capacity(n_frames * n_bins);

    for f in 0..n_frames {
        let offset = f * params.hop;
        for (k, c) in buf.iter_mut().enumerate() {
            *c = Complex::new(f64::from(clip.samples[offset + k]) * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        mags.extend(buf[..n_bins].iter().map(|c| c.norm()));
    }

    let max = mags.iter().copied().fold(0.0f64, f64::max);
    let floor = params.db_floor;
    let values = mags
        .into_iter()
        .map(|m| {
            if max <= 0.0 || m <= 0.0 {
                floor as f32
            } else {
                (20.0 * (m / max).log10()).clamp(floor, 0.0) as f32
            }
        })
        .collect();

    Ok(SpectrogramMatrix {
        values,
        n_frames,
        n_bins,
        frame_times_s: (0..n_frames)
            .map(|f| (f * params.hop) as f64 / sr + n_fft as f64 / (2.0 * sr))
            .collect(),
        bin_freqs_hz: (0..n_bins).map(|k| k as f64 * sr / n_fft as f64).collect(),
        sample_rate_hz: clip.sample_rate_hz,
        n_fft,
        hop: params.hop,
    })
}

/// An 8-bit grayscale spectrogram, row 0 at the top (highest frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramImage {
    pub pixels: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub params: SpectrogramParams,
    pub duration_s: f64,
    pub source_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImageSidecar {
    pub source_id: String,
    pub duration_s: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub sample_rate_hz: u32,
    pub display_fmin_hz: f64,
    pub display_fmax_hz: f64,
    pub params: SpectrogramParams,
}

impl SpectrogramImage {
    pub fn pixel(&self, row: u32, col: u32) -> u8 {
        self.pixels[(row * self.width + col) as usize]
    }

    /// Time span covered by column `col`.
    pub fn column_span_s(&self, col: u32) -> (f64, f64) {
        let w = f64::from(self.width);
        (
            f64::from(col) * self.duration_s / w,
            f64::from(col + 1) * self.duration_s / w,
        )
    }

    /// Column containing time `t`, for `t` in `[0, duration_s]`.
    pub fn column_for_time(&self, t: f64) -> u32 {
        let col = (t / self.duration_s * f64::from(self.width)).floor();
        (col.max(0.0) as u32).min(self.width - 1)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), SpectrogramError> {
        let file = File::create(path)?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width, self.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.pixels)?;
        writer.finish()?;
        Ok(())
    }

    pub fn sidecar(&self, sample_rate_hz: u32) -> ImageSidecar {
        let (fmin, fmax) = self
            .params
            .effective_band(sample_rate_hz)
            .unwrap_or((self.params.fmin_hz, self.params.fmax_hz));
        ImageSidecar {
            source_id: self.source_id.clone(),
            duration_s: self.duration_s,
            width_px: self.width,
            height_px: self.height,
            sample_rate_hz,
            display_fmin_hz: fmin,
            display_fmax_hz: fmax,
            params: self.params.clone(),
        }
    }

    pub fn write_sidecar(
        &self,
        sample_rate_hz: u32,
        path: impl AsRef<Path>,
    ) -> Result<(), SpectrogramError> {
        let mut json = serde_json::to_string_pretty(&self.sidecar(sample_rate_hz))?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }
}

/// Sample a dB matrix onto a `out_width_px × out_height_px` grid.
///
/// Columns are spread linearly over `[0, duration_s]` and rows log-uniformly
/// over the display band; values are bilinearly interpolated from the
/// matrix and mapped linearly from `[db_floor, 0]` to `[0, 255]`.
pub fn render_log_spectrogram(
    matrix: &SpectrogramMatrix,
    params: &SpectrogramParams,
    duration_s: f64,
    source_id: impl Into<String>,
) -> Result<SpectrogramImage, SpectrogramError> {
    params.validate()?;
    if matrix.n_frames == 0 || matrix.n_bins == 0 {
        return Err(SpectrogramError::EmptyMatrix);
    }
    if !(duration_s > 0.0) {
        return Err(SpectrogramError::InvalidParams(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let (fmin, fmax) = params.effective_band(matrix.sample_rate_hz)?;
    let sr = f64::from(matrix.sample_rate_hz);
    let width = params.out_width_px;
    let height = params.out_height_px;

    let last_frame = (matrix.n_frames - 1) as f64;
    let last_bin = (matrix.n_bins - 1) as f64;
    let half_window_s = matrix.n_fft as f64 / (2.0 * sr);
    let hop_s = matrix.hop as f64 / sr;

    let frame_pos: Vec<f64> = (0..width)
        .map(|c| {
            let t = (f64::from(c) + 0.5) * duration_s / f64::from(width);
            ((t - half_window_s) / hop_s).clamp(0.0, last_frame)
        })
        .collect();
    let bin_pos: Vec<f64> = (0..height)
        .map(|r| {
            let f = params.row_frequency(r, fmin, fmax);
            (f * matrix.n_fft as f64 / sr).clamp(0.0, last_bin)
        })
        .collect();

    let floor = params.db_floor;
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for &bp in &bin_pos {
        let b0 = bp.floor() as usize;
        let b1 = (b0 + 1).min(matrix.n_bins - 1);
        let fb = bp - b0 as f64;
        for &fp in &frame_pos {
            let f0 = fp.floor() as usize;
            let f1 = (f0 + 1).min(matrix.n_frames - 1);
            let ff = fp - f0 as f64;
            let v00 = f64::from(matrix.get(f0, b0));
            let v01 = f64::from(matrix.get(f0, b1));
            let v10 = f64::from(matrix.get(f1, b0));
            let v11 = f64::from(matrix.get(f1, b1));
            let db = (v00 * (1.0 - fb) + v01 * fb) * (1.0 - ff) + (v10 * (1.0 - fb) + v11 * fb) * ff;
            let gray = ((db - floor) / -floor * 255.0).round().clamp(0.0, 255.0);
            pixels.push(gray as u8);
        }
    }

    Ok(SpectrogramImage {
        pixels,
        width,
        height,
        params: params.clone(),
        duration_s,
        source_id: source_id.into(),
    })
}

/// STFT plus rendering in one call.
pub fn clip_to_image(
    clip: &AudioClip,
    params: &SpectrogramParams,
) -> Result<SpectrogramImage, SpectrogramError> {
    let matrix = compute_stft_db(clip, params)?;
    render_log_spectrogram(&matrix, params, clip.duration_s(), clip.source_id.clone())
}
