//! Audio front-end: 16 kHz mono PCM loading, fixed-duration trimming and
//! padding, 512-point STFT power spectra (hop 160) and 80-band log-mel
//! energies.
//!
//! Conventions: periodic Hann window of length 512, no centering or padding
//! of the signal, power spectrum, HTK mel scale with 82 equally spaced mel
//! points on [0, 8000] Hz, unnormalized triangles, natural log with a floor.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_FFT: usize = 512;
pub const HOP_LENGTH: usize = 160;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_MELS: usize = 80;
pub const F_MAX: f64 = 8_000.0;
pub const DEFAULT_SECONDS: f64 = 3.0;
pub const DEFAULT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>) -> Self {
        AudioClip {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `bands x frames` log-mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    /// Row-major (band-major) flattening.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

/// Reads a 16-bit PCM mono 16 kHz WAV file; samples are scaled by 1/32768.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::IoFailure(io),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV encoding".into()),
        other => Error::CorruptFile(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedFormat(format!(
            "sample rate {} Hz, expected {SAMPLE_RATE} Hz",
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Error::CorruptFile(e.to_string()))?;
    Ok(AudioClip::new(samples))
}

/// Truncates to, or zero-pads at the end up to, `round(seconds * rate)`
/// samples. Trimming keeps the leading segment.
pub fn fix_duration(clip: &AudioClip, seconds: f64) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::InvalidConfig(format!("duration {seconds} s")));
    }
    let target = (seconds * clip.sample_rate as f64).round() as usize;
    let mut samples = clip.samples.clone();
    samples.resize(target, 0.0);
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

pub fn frame_count(n_samples: usize) -> usize {
    if n_samples < N_FFT {
        0
    } else {
        1 + (n_samples - N_FFT) / HOP_LENGTH
    }
}

/// Periodic Hann window: 0.5 - 0.5 cos(2 pi n / N).
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Default for Stft {
    fn default() -> Self {
        Self::new()
    }
}

impl Stft {
    pub fn new() -> Self {
        Stft {
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
            window: hann_periodic(N_FFT),
        }
    }

    /// `257 x frames` power spectrogram.
    pub fn power(&self, clip: &AudioClip) -> Result<Array2<f64>> {
        if clip.sample_rate != SAMPLE_RATE {
            return Err(Error::UnsupportedFormat(format!("sample rate {}", clip.sample_rate)));
        }
        if clip.len() < N_FFT {
            return Err(Error::ClipTooShort { len: clip.len() });
        }
        if clip.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteValue {
                context: "audio samples".into(),
            });
        }
        let frames = frame_count(clip.len());
        let mut out = Array2::<f64>::zeros((N_BINS, frames));
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        for f in 0..frames {
            let start = f * HOP_LENGTH;
            for ((b, &s), &w) in buf.iter_mut().zip(&clip.samples[start..start + N_FFT]).zip(&self.window) {
                *b = Complex::new(s * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (bin, c) in buf.iter().take(N_BINS).enumerate() {
                out[(bin, f)] = c.norm_sqr();
            }
        }
        Ok(out)
    }
}

pub fn stft_power(clip: &AudioClip) -> Result<Array2<f64>> {
    Stft::new().power(clip)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Edge and peak frequencies of the triangles: `N_MELS + 2` points.
pub fn mel_points_hz() -> Vec<f64> {
    let top = hz_to_mel(F_MAX);
    (0..N_MELS + 2)
        .map(|i| mel_to_hz(top * i as f64 / (N_MELS + 1) as f64))
        .collect()
}

/// Frequency of FFT bin `k`.
pub fn bin_hz(k: usize) -> f64 {
    k as f64 * SAMPLE_RATE as f64 / N_FFT as f64
}

/// `80 x 257` triangular filterbank, peak weight 1 at each center frequency.
pub fn mel_filterbank() -> Array2<f64> {
    let edges = mel_points_hz();
    let mut bank = Array2::<f64>::zeros((N_MELS, N_BINS));
    for m in 0..N_MELS {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..N_BINS {
            let f = bin_hz(k);
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            bank[(m, k)] = w;
        }
    }
    bank
}

pub fn log_mel(power: &Array2<f64>, floor_epsilon: f64) -> Result<MelSpectrogram> {
    if power.nrows() != N_BINS || power.ncols() == 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("{N_BINS} x frames"),
            found: format!("{} x {}", power.nrows(), power.ncols()),
        });
    }
    if floor_epsilon.is_nan() || floor_epsilon <= 0.0 {
        return Err(Error::InvalidConfig(format!("floor {floor_epsilon} must be positive")));
    }
    if power.iter().any(|&p| p < 0.0) {
        return Err(Error::NegativePower);
    }
    let mel = mel_filterbank().dot(power);
    Ok(MelSpectrogram {
        values: mel.mapv(|v| v.max(floor_epsilon).ln()),
    })
}

/// Duration fix, STFT and log-mel in one pass.
pub fn extract(clip: &AudioClip) -> Result<MelSpectrogram> {
    let fixed = fix_duration(clip, DEFAULT_SECONDS)?;
    log_mel(&stft_power(&fixed)?, DEFAULT_FLOOR)
}
