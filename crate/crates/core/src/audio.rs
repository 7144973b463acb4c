//! Mono audio clips: WAV input/output, band-limited resampling and a
//! deterministic tone-burst synthesizer used as a test fixture generator.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Sample rate of the recorders used throughout the pipeline.
pub const PIPELINE_SAMPLE_RATE_HZ: u32 = 32_000;

/// Default seed for every RNG consumer when the caller does not provide one.
pub const DEFAULT_SEED: u64 = 42;

/// Taps of the windowed-sinc kernel, measured at the lower of the two rates.
const RESAMPLE_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Largest number of polyphase kernels precomputed for one conversion.
const MAX_PHASE_TABLE: u64 = 8192;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid sample rate {0} Hz")]
    InvalidRate(u32),
    #[error("tone burst {index} [{start_s}, {end_s}] s lies outside [0, {duration_s}] s")]
    BurstOutOfRange {
        index: usize,
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("invalid tone burst amplitudes: {0}")]
    InvalidAmplitude(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A mono clip with samples in `[-1.0, 1.0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(
        samples: Vec<f32>,
        sample_rate_hz: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidRate(sample_rate_hz));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean square amplitude.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    /// RMS over `[start_s, end_s)`, clipped to the clip bounds.
    pub fn rms_between(&self, start_s: f64, end_s: f64) -> f64 {
        let sr = f64::from(self.sample_rate_hz);
        let lo = ((start_s * sr).round().max(0.0) as usize).min(self.samples.len());
        let hi = ((end_s * sr).round().max(0.0) as usize).min(self.samples.len());
        if hi <= lo {
            return 0.0;
        }
        mean_square(&self.samples[lo..hi]).sqrt()
    }

    pub(crate) fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            source_id: self.source_id.clone(),
        }
    }
}

pub(crate) fn mean_square(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum::<f64>() / samples.len() as f64
}

/// Clamp to the legal amplitude range, mapping NaN to silence.
pub(crate) fn clamp_sample(x: f64) -> f32 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-1.0, 1.0) as f32
    }
}

/// Source id for a path: the file stem.
pub fn source_id_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Read a PCM WAV file, downmixing multi-channel audio by channel mean.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(map_hound_error)?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(AudioError::MalformedHeader("sample rate is zero".into()));
    }
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(AudioError::MalformedHeader("zero channels".into()));
    }

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(AudioError::UnsupportedEncoding(format!(
                    "{}-bit float",
                    spec.bits_per_sample
                )));
            }
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<Result<_, _>>()
                .map_err(map_hound_error)?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if !matches!(bits, 8 | 16 | 24 | 32) {
                return Err(AudioError::UnsupportedEncoding(format!("{bits}-bit integer")));
            }
            let scale = f64::from(1u32 << (bits - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(map_hound_error)?
        }
    };

    if interleaved.len() < channels {
        return Err(AudioError::EmptyAudio);
    }
    let samples: Vec<f32> = interleaved
        .chunks_exact(channels)
        .map(|frame| {
            let mean = frame.iter().sum::<f64>() / channels as f64;
            clamp_sample(mean)
        })
        .collect();

    AudioClip::new(samples, spec.sample_rate, source_id_for(path))
}

fn map_hound_error(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::Unsupported => {
            AudioError::UnsupportedEncoding("compressed or non-PCM format".into())
        }
        hound::Error::FormatError(msg) => AudioError::MalformedHeader(msg.to_string()),
        other => AudioError::MalformedHeader(other.to_string()),
    }
}

/// Write a clip as 16-bit PCM mono.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound_error)?;
    for &s in &clip.samples {
        let v = (f64::from(s) * 32768.0)
            .round()
            .clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
        writer.write_sample(v).map_err(map_hound_error)?;
    }
    writer.finalize().map_err(map_hound_error)
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(x: f64, beta: f64) -> f64 {
    // x in [-1, 1]
    let r = 1.0 - x * x;
    if r <= 0.0 {
        return 0.0;
    }
    bessel_i0(beta * r.sqrt()) / bessel_i0(beta)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Kernel taps for one fractional input position: the first input offset
/// relative to `floor(center)` and the weights from there on.
struct Phase {
    first: i64,
    weights: Vec<f64>,
}

fn kernel_phase(frac: f64, cutoff: f64, half_width: f64) -> Phase {
    let first = (frac - half_width).ceil() as i64;
    let last = (frac + half_width).floor() as i64;
    let weights = (first..=last)
        .map(|o| {
            let dx = o as f64 - frac;
            cutoff * sinc(cutoff * dx) * kaiser(dx / half_width, KAISER_BETA)
        })
        .collect();
    Phase { first, weights }
}

/// Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.
///
/// The cutoff sits at the lower of the two Nyquist frequencies. Output length
/// is `round(len * target / source)`.
pub fn resample(clip: &AudioClip, target_rate_hz: u32) -> Result<AudioClip, AudioError> {
    if target_rate_hz == 0 {
        return Err(AudioError::InvalidRate(target_rate_hz));
    }
    if clip.sample_rate_hz == 0 {
        return Err(AudioError::InvalidRate(clip.sample_rate_hz));
    }
    if target_rate_hz == clip.sample_rate_hz {
        return Ok(clip.clone());
    }

    let g = gcd(u64::from(clip.sample_rate_hz), u64::from(target_rate_hz));
    // output sample i sits at input position i * down / up
    let up = u64::from(target_rate_hz) / g;
    let down = u64::from(clip.sample_rate_hz) / g;
    let cutoff = (up as f64 / down as f64).min(1.0);
    let half_width = (RESAMPLE_TAPS / 2) as f64 / cutoff;

    let n_in = clip.samples.len();
    let n_out = (n_in as f64 * up as f64 / down as f64).round() as usize;
    let table: Option<Vec<Phase>> = (up <= MAX_PHASE_TABLE).then(|| {
        (0..up)
            .map(|p| kernel_phase(p as f64 / up as f64, cutoff, half_width))
            .collect()
    });

    let input = &clip.samples;
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out as u64 {
        let pos = i * down;
        let base = (pos / up) as i64;
        let phase_idx = pos % up;
        let computed;
        let phase = match &table {
            Some(t) => &t[phase_idx as usize],
            None => {
                computed = kernel_phase(phase_idx as f64 / up as f64, cutoff, half_width);
                &computed
            }
        };
        let mut acc = 0.0;
        for (k, w) in phase.weights.iter().enumerate() {
            let j = base + phase.first + k as i64;
            if j >= 0 && (j as usize) < n_in {
                acc += w * f64::from(input[j as usize]);
            }
        }
        out.push(clamp_sample(acc));
    }

    Ok(AudioClip {
        samples: out,
        sample_rate_hz: target_rate_hz,
        source_id: clip.source_id.clone(),
    })
}

/// One sinusoidal burst of a synthetic clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneBurst {
    pub start_s: f64,
    pub end_s: f64,
    pub freq_hz: f64,
    pub amplitude: f64,
}

impl ToneBurst {
    pub fn new(start_s: f64, end_s: f64, freq_hz: f64, amplitude: f64) -> Self {
        Self {
            start_s,
            end_s,
            freq_hz,
            amplitude,
        }
    }
}

/// Synthesize a clip of tone bursts over Gaussian background noise.
///
/// `noise_floor` is the standard deviation of the noise. Output is a pure
/// function of the arguments, including `seed`.
pub fn synth_clip(
    bursts: &[ToneBurst],
    noise_floor: f64,
    duration_s: f64,
    sample_rate_hz: u32,
    seed: u64,
    source_id: impl Into<String>,
) -> Result<AudioClip, AudioError> {
    if sample_rate_hz == 0 {
        return Err(AudioError::InvalidRate(sample_rate_hz));
    }
    for (index, b) in bursts.iter().enumerate() {
        let in_range = b.start_s >= 0.0 && b.end_s <= duration_s && b.start_s <= b.end_s;
        if !in_range || !b.start_s.is_finite() || !b.end_s.is_finite() {
            return Err(AudioError::BurstOutOfRange {
                index,
                start_s: b.start_s,
                end_s: b.end_s,
                duration_s,
            });
        }
        if !(b.amplitude >= 0.0) {
            return Err(AudioError::InvalidAmplitude(format!(
                "burst {index} has amplitude {}",
                b.amplitude
            )));
        }
    }
    let total_amplitude: f64 = bursts.iter().map(|b| b.amplitude).sum();
    if total_amplitude > 1.0 + 1e-12 {
        return Err(AudioError::InvalidAmplitude(format!(
            "amplitudes sum to {total_amplitude} > 1"
        )));
    }
    if !(noise_floor >= 0.0) {
        return Err(AudioError::InvalidAmplitude(format!(
            "noise floor {noise_floor} is negative"
        )));
    }

    let sr = f64::from(sample_rate_hz);
    let n = (duration_s * sr).round() as usize;
    let mut samples = vec![0.0f64; n];

    for b in bursts {
        let lo = ((b.start_s * sr).round() as usize).min(n);
        let hi = ((b.end_s * sr).round() as usize).min(n);
        let omega = 2.0 * PI * b.freq_hz / sr;
        for (k, s) in samples[lo..hi].iter_mut().enumerate() {
            *s += b.amplitude * (omega * k as f64).sin();
        }
    }

    if noise_floor > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_floor)
            .map_err(|e| AudioError::InvalidAmplitude(e.to_string()))?;
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }

    AudioClip::new(
        samples.into_iter().map(clamp_sample).collect(),
        sample_rate_hz,
        source_id,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sine(freq: f64, rate: u32, seconds: f64, amp: f64) -> AudioClip {
        let n = (seconds * f64::from(rate)).round() as usize;
        let samples = (0..n)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()) as f32)
            .collect();
        AudioClip::new(samples, rate, "sine").unwrap()
    }

    /// Peak-magnitude frequency by direct DFT evaluation over a fine grid.
    fn dft_peak_hz(samples: &[f32], rate: u32, lo: f64, hi: f64, step: f64) -> f64 {
        let mut best = (0.0, lo);
        let mut f = lo;
        while f <= hi {
            let w = 2.0 * PI * f / f64::from(rate);
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &s) in samples.iter().enumerate() {
                re += f64::from(s) * (w * i as f64).cos();
                im -= f64::from(s) * (w * i as f64).sin();
            }
            let mag = re.hypot(im);
            if mag > best.0 {
                best = (mag, f);
            }
            f += step;
        }
        best.1
    }

    #[test]
    fn wav_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let clip = synth_clip(
            &[ToneBurst::new(0.1, 0.4, 1500.0, 0.7)],
            0.05,
            0.5,
            16_000,
            7,
            "rt",
        )
        .unwrap();
        write_wav(&clip, &path).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate_hz, 16_000);
        assert_eq!(back.source_id, "rt");
        assert_eq!(back.len(), clip.len());
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-7);
        }
    }

    #[test]
    fn sixteen_bit_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 32_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -16384, i16::MIN] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.samples, vec![0.0, 0.5, -0.5, -1.0]);
    }

    #[test]
    fn stereo_downmix_by_mean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44_100,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0.2f32, 0.6, -0.4, 0.0] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.len(), 2);
        assert_abs_diff_eq!(clip.samples[0], 0.4, epsilon = 1e-6);
        assert_abs_diff_eq!(clip.samples[1], -0.2, epsilon = 1e-6);
    }

    #[test]
    fn twenty_four_bit_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8_000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(1i32 << 22).unwrap();
        w.finalize().unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.samples, vec![0.5]);
    }

    #[test]
    fn empty_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 32_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        hound::WavWriter::create(&empty, spec).unwrap().finalize().unwrap();
        assert!(matches!(load_wav(&empty), Err(AudioError::EmptyAudio)));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"RIFF\x04\x00\x00\x00JUNKJUNK").unwrap();
        assert!(matches!(load_wav(&junk), Err(AudioError::MalformedHeader(_))));
    }

    #[test]
    fn compressed_wav_is_unsupported() {
        // WAVE_FORMAT_MULAW (7) fmt chunk, 1 channel, 8 kHz, 8-bit
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(4u32 + 8 + 16 + 8 + 2).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&7u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&8u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0x7f, 0xff]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mulaw.wav");
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_wav(&path),
            Err(AudioError::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn duration_of_a_minute() {
        let clip = AudioClip::new(vec![0.0; 1_920_000], 32_000, "m").unwrap();
        assert_eq!(clip.duration_s(), 60.0);
    }

    #[test]
    fn resample_identity_at_same_rate() {
        let clip = sine(440.0, 32_000, 0.25, 0.3);
        assert_eq!(resample(&clip, 32_000).unwrap(), clip);
    }

    #[test]
    fn resample_length_and_invalid_rate() {
        let clip = AudioClip::new(vec![0.0; 220_500], 44_100, "x").unwrap();
        let out = resample(&clip, 32_000).unwrap();
        assert!((out.len() as i64 - 160_000).abs() <= 1);
        assert!(matches!(resample(&clip, 0), Err(AudioError::InvalidRate(0))));
    }

    #[test]
    fn resampled_sine_keeps_frequency_and_energy() {
        let clip = sine(1000.0, 44_100, 1.0, 0.5);
        let out = resample(&clip, 32_000).unwrap();
        assert_eq!(out.sample_rate_hz, 32_000);
        let peak = dft_peak_hz(&out.samples, 32_000, 990.0, 1010.0, 0.25);
        assert!((peak - 1000.0).abs() <= 2.0, "peak at {peak} Hz");

        // steady-state energy, skipping the kernel's edge transient
        let trim_in = 2_000;
        let trim_out = trim_in * 32_000 / 44_100;
        let e_in = mean_square(&clip.samples[trim_in..clip.len() - trim_in]);
        let e_out = mean_square(&out.samples[trim_out..out.len() - trim_out]);
        assert!((e_out / e_in - 1.0).abs() < 0.01, "energy ratio {}", e_out / e_in);
    }

    #[test]
    fn upsampling_keeps_energy() {
        let clip = sine(3000.0, 16_000, 0.5, 0.4);
        let out = resample(&clip, 32_000).unwrap();
        assert_eq!(out.len(), 16_000);
        let e_in = mean_square(&clip.samples[500..7_500]);
        let e_out = mean_square(&out.samples[1_000..15_000]);
        assert!((e_out / e_in - 1.0).abs() < 0.01);
    }

    #[test]
    fn silent_synthesis() {
        let clip = synth_clip(&[], 0.0, 2.0, 32_000, 1, "s").unwrap();
        assert_eq!(clip.len(), 64_000);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn burst_rms_matches_closed_form() {
        let clip = synth_clip(
            &[ToneBurst::new(1.0, 2.0, 2000.0, 0.5)],
            0.0,
            3.0,
            32_000,
            1,
            "b",
        )
        .unwrap();
        assert_abs_diff_eq!(clip.rms_between(1.0, 2.0), 0.5 / 2f64.sqrt(), epsilon = 1e-4);
        assert_eq!(clip.rms_between(0.0, 1.0), 0.0);
        assert_eq!(clip.rms_between(2.0, 3.0), 0.0);
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let bursts = [ToneBurst::new(0.5, 1.0, 3000.0, 0.4)];
        let a = synth_clip(&bursts, 0.01, 1.5, 32_000, 9, "d").unwrap();
        let b = synth_clip(&bursts, 0.01, 1.5, 32_000, 9, "d").unwrap();
        let c = synth_clip(&bursts, 0.01, 1.5, 32_000, 10, "d").unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn burst_outside_clip_is_rejected() {
        let err = synth_clip(
            &[ToneBurst::new(1.0, 4.0, 1000.0, 0.5)],
            0.0,
            3.0,
            32_000,
            0,
            "x",
        )
        .unwrap_err();
        assert!(matches!(err, AudioError::BurstOutOfRange { index: 0, .. }));
        let err = synth_clip(
            &[
                ToneBurst::new(0.0, 1.0, 1000.0, 0.7),
                ToneBurst::new(1.0, 2.0, 1000.0, 0.7),
            ],
            0.0,
            3.0,
            32_000,
            0,
            "x",
        )
        .unwrap_err();
        assert!(matches!(err, AudioError::InvalidAmplitude(_)));
    }

    #[test]
    fn bessel_matches_reference_values() {
        // I0(1) and I0(5) from Abramowitz & Stegun tables
        assert_abs_diff_eq!(bessel_i0(1.0), 1.266_065_877_752_008, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_i0(5.0), 27.239_871_823_604_44, epsilon = 1e-9);
    }
}
