//! Mono sample buffers, WAV ingest/emit, and fixed-hop framing.
//!
//! Integer PCM is normalised by 1/32768, so 16-bit payloads round-trip
//! bit-exactly through [`read_wav`] and [`write_wav`].

use std::path::Path;

use crate::error::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;
const PCM16_MAX: f64 = 1.0 - 1.0 / PCM16_SCALE;

/// Mono audio at a fixed sample rate.
///
/// Always non-empty, finite, and with a positive rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidBuffer("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidBuffer(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// A copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|v| v * gain).collect(),
            self.sample_rate_hz,
        )
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Converts a duration in milliseconds to a whole number of samples.
pub fn ms_to_samples(ms: f64, sample_rate_hz: u32) -> usize {
    (ms * sample_rate_hz as f64 / 1000.0).round().max(0.0) as usize
}

/// Window and hop lengths for short-time analysis, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSpec {
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl FrameSpec {
    pub fn new(window_ms: f64, hop_ms: f64) -> Result<Self> {
        if !(window_ms > 0.0 && window_ms.is_finite()) || !(hop_ms > 0.0 && hop_ms.is_finite()) {
            return Err(Error::InvalidFrameSpec(format!(
                "window {window_ms} ms and hop {hop_ms} ms must be positive"
            )));
        }
        if hop_ms > window_ms {
            return Err(Error::InvalidFrameSpec(format!(
                "hop {hop_ms} ms exceeds window {window_ms} ms"
            )));
        }
        Ok(Self { window_ms, hop_ms })
    }

    /// Window and hop in samples, checked against `sample_rate_hz`.
    pub fn to_samples(&self, sample_rate_hz: u32) -> Result<(usize, usize)> {
        let window = ms_to_samples(self.window_ms, sample_rate_hz);
        let hop = ms_to_samples(self.hop_ms, sample_rate_hz).max(1);
        if window < 2 {
            return Err(Error::InvalidFrameSpec(format!(
                "window {} ms is {window} samples at {sample_rate_hz} Hz, need at least 2",
                self.window_ms
            )));
        }
        Ok((window, hop.min(window)))
    }
}

/// Splits `buffer` into frames starting at multiples of the hop.
///
/// There are `ceil(len / hop)` frames; any frame running past the end is
/// zero-padded to the full window.
pub fn frames(buffer: &SampleBuffer, spec: &FrameSpec) -> Result<Vec<(usize, Vec<f64>)>> {
    let (window, hop) = spec.to_samples(buffer.sample_rate_hz())?;
    Ok(frame_slice(buffer.samples(), window, hop))
}

pub(crate) fn frame_slice(samples: &[f64], window: usize, hop: usize) -> Vec<(usize, Vec<f64>)> {
    let count = samples.len().div_ceil(hop);
    (0..count)
        .map(|f| {
            let start = f * hop;
            let end = (start + window).min(samples.len());
            let mut frame = Vec::with_capacity(window);
            frame.extend_from_slice(&samples[start..end]);
            frame.resize(window, 0.0);
            (start, frame)
        })
        .collect()
}

/// Reads a mono RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float.
pub fn read_wav(path: impl AsRef<Path>) -> Result<SampleBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {format:?} encoding",
                path.display()
            )))
        }
    };
    if samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    SampleBuffer::new(samples, spec.sample_rate)
}

/// Writes `buffer` as 16-bit PCM mono, clamping to the representable range.
pub fn write_wav(buffer: &SampleBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &v in buffer.samples() {
        writer
            .write_sample(quantize_pcm16(v))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn quantize_pcm16(v: f64) -> i16 {
    (v.clamp(-1.0, PCM16_MAX) * PCM16_SCALE).round() as i16
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: unsupported WAV encoding", path.display()))
        }
        hound::Error::TooWide | hound::Error::InvalidSampleFormat => Error::UnsupportedFormat(
            format!("{}: sample format does not match header", path.display()),
        ),
        hound::Error::FormatError(msg) => {
            Error::MalformedHeader(format!("{}: {msg}", path.display()))
        }
        hound::Error::UnfinishedSample => {
            Error::MalformedHeader(format!("{}: truncated sample data", path.display()))
        }
    }
}
