//! From a zero-frequency filter bank to voiced segments.
//!
//! Each channel is weighted by its own first difference, smoothed with a
//! 40 ms running mean, and the channels are summed into a composite signal
//! normalised to [0, 1]. The composite is divided by short-time spectral
//! entropy to form the decision surface, which is thresholded block by block
//! at `min + median / 3`. Short outliers are then merged and dropped.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::{frame_slice, ms_to_samples, write_wav, SampleBuffer};
use crate::error::{Error, Result};
use crate::segments::{Segment, SegmentList};
use crate::zff::{compute_bank, CompensatedPrefix, ZffBank, ZffConfig};

/// Which signal the spectral entropy is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropySource {
    /// The raw double-integrator output.
    RawX,
    /// The first trend-removed channel.
    #[default]
    Y0,
    /// The mean-removed input.
    Input,
}

impl FromStr for EntropySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw_x" => Ok(Self::RawX),
            "y0" => Ok(Self::Y0),
            "input" => Ok(Self::Input),
            other => Err(Error::InvalidConfig(format!(
                "unknown entropy source {other:?} (expected raw_x, y0, or input)"
            ))),
        }
    }
}

impl fmt::Display for EntropySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RawX => "raw_x",
            Self::Y0 => "y0",
            Self::Input => "input",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub running_mean_ms: f64,
    pub entropy_window_ms: f64,
    pub threshold_block_ms: f64,
    pub min_segment_ms: f64,
    pub merge_gap_ms: f64,
    pub entropy_floor: f64,
    pub entropy_source: EntropySource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            running_mean_ms: 40.0,
            entropy_window_ms: 20.0,
            threshold_block_ms: 300.0,
            min_segment_ms: 50.0,
            merge_gap_ms: 30.0,
            entropy_floor: 1e-6,
            entropy_source: EntropySource::Y0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("running_mean_ms", self.running_mean_ms),
            ("entropy_window_ms", self.entropy_window_ms),
            ("threshold_block_ms", self.threshold_block_ms),
            ("min_segment_ms", self.min_segment_ms),
            ("merge_gap_ms", self.merge_gap_ms),
            ("entropy_floor", self.entropy_floor),
        ];
        for (name, v) in durations {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.entropy_window_ms > self.threshold_block_ms {
            return Err(Error::InvalidConfig(format!(
                "entropy_window_ms ({}) exceeds threshold_block_ms ({})",
                self.entropy_window_ms, self.threshold_block_ms
            )));
        }
        Ok(())
    }
}

/// `d[n] = y[n] * (y[n] - y[n-1])`, with `d[0] = 0`.
pub fn gradient_weight(y: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(y.len());
    if y.is_empty() {
        return d;
    }
    d.push(0.0);
    d.extend(y.windows(2).map(|w| w[1] * (w[1] - w[0])));
    d
}

/// Centred moving average; near the ends the window is clipped to the
/// samples that exist.
///
/// A window of `W` samples spans `W / 2` samples either side of the centre.
pub fn running_mean(d: &[f64], window_ms: f64, sample_rate_hz: u32) -> Vec<f64> {
    let half = ms_to_samples(window_ms, sample_rate_hz).max(1) / 2;
    running_mean_samples(d, half)
}

pub(crate) fn running_mean_samples(d: &[f64], half: usize) -> Vec<f64> {
    if d.is_empty() {
        return Vec::new();
    }
    let prefix = CompensatedPrefix::new(d);
    let last = d.len() - 1;
    (0..d.len())
        .map(|n| {
            let (a, b) = (n.saturating_sub(half), (n + half).min(last) + 1);
            prefix.range_sum(a, b) / (b - a) as f64
        })
        .collect()
}

/// Element-wise sum of `channels`, min-max normalised to [0, 1].
///
/// A flat sum normalises to all zeros.
pub fn composite(channels: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = channels.first() else {
        return Vec::new();
    };
    let mut sum = first.clone();
    for ch in &channels[1..] {
        debug_assert_eq!(ch.len(), sum.len());
        for (acc, v) in sum.iter_mut().zip(ch) {
            *acc += v;
        }
    }
    let (lo, hi) = sum
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return vec![0.0; sum.len()];
    }
    let range = hi - lo;
    sum.iter()
        .map(|v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect()
}

/// Shannon entropy in bits of a magnitude spectrum treated as a distribution.
pub fn magnitude_entropy(magnitudes: &[f64]) -> f64 {
    let total: f64 = magnitudes.iter().sum();
    let max = (magnitudes.len() as f64).log2();
    if !(total > 0.0) {
        return max;
    }
    let h: f64 = magnitudes
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let p = m / total;
            -p * p.log2()
        })
        .sum();
    h.clamp(0.0, max)
}

/// Spectral entropy of non-overlapping frames, held constant per sample.
///
/// Each frame has its mean removed and is transformed at its own length; the
/// magnitudes of bins `1..=W/2` form the distribution (bin 0 is empty after
/// mean removal), so the maximum is `log2(W/2)`. The signal is scaled to unit
/// peak first and frames whose total magnitude falls below `floor` get the
/// maximum entropy, which makes the result independent of input gain.
pub fn spectral_entropy(
    x: &[f64],
    window_ms: f64,
    sample_rate_hz: u32,
    floor: f64,
) -> Result<Vec<f64>> {
    let window = ms_to_samples(window_ms, sample_rate_hz);
    if window < 4 {
        return Err(Error::InvalidConfig(format!(
            "entropy window of {window_ms} ms is {window} samples, need at least 4"
        )));
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();

    let analyzer = FrameEntropy::new(window, floor);
    let mut out = Vec::with_capacity(x.len());
    for (start, frame) in frame_slice(&scaled, window, window) {
        let h = analyzer.entropy(&frame);
        let end = (start + window).min(x.len());
        out.extend(std::iter::repeat_n(h, end - start));
    }
    Ok(out)
}

pub struct FrameEntropy {
    fft: Arc<dyn Fft<f64>>,
    window: usize,
    floor: f64,
}

impl FrameEntropy {
    pub fn new(window: usize, floor: f64) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(window);
        Self { fft, window, floor }
    }

    pub fn bins(&self) -> usize {
        self.window / 2
    }

    /// Magnitudes of bins `1..=W/2` after mean removal.
    pub fn magnitudes(&self, frame: &[f64]) -> Vec<f64> {
        debug_assert_eq!(frame.len(), self.window);
        let mean = frame.iter().sum::<f64>() / frame.len() as f64;
        let mut buf: Vec<Complex<f64>> =
            frame.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        self.fft.process(&mut buf);
        buf[1..=self.bins()].iter().map(|c| c.norm()).collect()
    }

    pub fn entropy(&self, frame: &[f64]) -> f64 {
        let mags = self.magnitudes(frame);
        if mags.iter().sum::<f64>() < self.floor {
            return (self.bins() as f64).log2();
        }
        magnitude_entropy(&mags)
    }
}

/// Threshold of one block, covering samples `start..end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockThreshold {
    pub start: usize,
    pub end: usize,
    pub min: f64,
    pub median: f64,
    pub theta: f64,
}

/// Median with the two middle values averaged for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if v.len() % 2 == 1 {
        return upper;
    }
    let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lower + upper) / 2.0
}

/// `theta = min + median / 3` over consecutive blocks of `block` samples.
pub fn block_thresholds(y_ds: &[f64], block: usize) -> Vec<BlockThreshold> {
    let block = block.max(1);
    y_ds.chunks(block)
        .enumerate()
        .map(|(i, chunk)| {
            let min = chunk.iter().copied().fold(f64::INFINITY, f64::min);
            let median = median(chunk);
            BlockThreshold {
                start: i * block,
                end: i * block + chunk.len(),
                min,
                median,
                theta: min + median / 3.0,
            }
        })
        .collect()
}

/// Per-sample composite, entropy weight, and decision surface.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSurface {
    pub r_c: Vec<f64>,
    pub inv_entropy: Vec<f64>,
    pub y_ds: Vec<f64>,
    pub thresholds: Vec<BlockThreshold>,
    pub sample_rate_hz: u32,
}

impl DecisionSurface {
    pub fn len(&self) -> usize {
        self.y_ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_ds.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }

    /// Block thresholds expanded to one value per sample.
    pub fn theta_per_sample(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.thresholds {
            out.extend(std::iter::repeat_n(b.theta, b.end - b.start));
        }
        out
    }

    /// `y_ds >= theta` per sample.
    pub fn voiced_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.len());
        for b in &self.thresholds {
            mask.extend(self.y_ds[b.start..b.end].iter().map(|&v| v >= b.theta));
        }
        mask
    }
}

pub fn decision_surface(bank: &ZffBank, cfg: &PipelineConfig) -> Result<DecisionSurface> {
    cfg.validate()?;
    if bank.y.is_empty() || bank.is_empty() {
        return Err(Error::InvalidConfig("filter bank has no channels".into()));
    }
    let rate = bank.sample_rate_hz;
    let smoothed: Vec<Vec<f64>> = bank
        .y
        .iter()
        .map(|y| running_mean(&gradient_weight(y), cfg.running_mean_ms, rate))
        .collect();
    let r_c = composite(&smoothed);

    let source: &[f64] = match cfg.entropy_source {
        EntropySource::RawX => &bank.x,
        EntropySource::Y0 => &bank.y[0],
        EntropySource::Input => &bank.signal,
    };
    let entropy = spectral_entropy(source, cfg.entropy_window_ms, rate, cfg.entropy_floor)?;
    let inv_entropy: Vec<f64> = entropy
        .iter()
        .map(|&h| 1.0 / h.max(cfg.entropy_floor))
        .collect();
    let y_ds: Vec<f64> = r_c.iter().zip(&inv_entropy).map(|(r, w)| r * w).collect();
    let block = ms_to_samples(cfg.threshold_block_ms, rate).max(1);
    let thresholds = block_thresholds(&y_ds, block);
    Ok(DecisionSurface {
        r_c,
        inv_entropy,
        y_ds,
        thresholds,
        sample_rate_hz: rate,
    })
}

/// Maximal runs of `true` as half-open intervals `[i / rate, (j + 1) / rate)`.
pub fn mask_to_segments(mask: &[bool], sample_rate_hz: u32) -> SegmentList {
    let rate = sample_rate_hz as f64;
    let mut segments = Vec::new();
    let mut run_start = None;
    for (i, &v) in mask.iter().chain(std::iter::once(&false)).enumerate() {
        match (v, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                segments.push(Segment::new(s as f64 / rate, i as f64 / rate));
                run_start = None;
            }
            _ => {}
        }
    }
    SegmentList {
        segments,
        total_duration_s: mask.len() as f64 / rate,
    }
}

/// Raw voiced segments: samples at or above their block threshold.
pub fn dynamic_threshold(ds: &DecisionSurface, cfg: &PipelineConfig) -> SegmentList {
    let block = ms_to_samples(cfg.threshold_block_ms, ds.sample_rate_hz).max(1);
    let mut mask = Vec::with_capacity(ds.len());
    for b in block_thresholds(&ds.y_ds, block) {
        mask.extend(ds.y_ds[b.start..b.end].iter().map(|&v| v >= b.theta));
    }
    mask_to_segments(&mask, ds.sample_rate_hz)
}

/// Merges segments separated by less than `merge_gap_ms`, then drops those
/// shorter than `min_segment_ms`.
pub fn smooth(raw: &SegmentList, cfg: &PipelineConfig) -> SegmentList {
    let merge_gap = cfg.merge_gap_ms / 1000.0;
    let min_len = cfg.min_segment_ms / 1000.0;
    let mut merged: Vec<Segment> = Vec::with_capacity(raw.len());
    for s in &raw.segments {
        match merged.last_mut() {
            Some(last) if s.start_s - last.end_s < merge_gap => last.end_s = s.end_s,
            _ => merged.push(*s),
        }
    }
    merged.retain(|s| s.duration_s() >= min_len);
    SegmentList {
        segments: merged,
        total_duration_s: raw.total_duration_s,
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub segments: SegmentList,
    pub surface: DecisionSurface,
}

pub fn detect(signal: &SampleBuffer, zcfg: &ZffConfig, pcfg: &PipelineConfig) -> Result<Detection> {
    let bank = compute_bank(signal, zcfg)?;
    let surface = decision_surface(&bank, pcfg)?;
    let segments = smooth(&dynamic_threshold(&surface, pcfg), pcfg);
    Ok(Detection { segments, surface })
}

/// The composite `r_c` rescaled to [-1, 1] as `2 r_c - 1`.
pub fn composite_signal(
    signal: &SampleBuffer,
    zcfg: &ZffConfig,
    pcfg: &PipelineConfig,
) -> Result<SampleBuffer> {
    let bank = compute_bank(signal, zcfg)?;
    let surface = decision_surface(&bank, pcfg)?;
    SampleBuffer::new(
        surface.r_c.iter().map(|r| 2.0 * r - 1.0).collect(),
        signal.sample_rate_hz(),
    )
}

/// Writes [`composite_signal`] as a 16-bit WAV at the input rate, for use as
/// the front end of another detector.
pub fn export_composite(
    signal: &SampleBuffer,
    zcfg: &ZffConfig,
    pcfg: &PipelineConfig,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_wav(&composite_signal(signal, zcfg, pcfg)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn gradient_weight_examples() {
        assert_eq!(
            gradient_weight(&[0.0, 1.0, 2.0, 3.0]),
            vec![0.0, 1.0, 2.0, 3.0]
        );
        assert!(gradient_weight(&[4.0; 6]).iter().all(|&v| v == 0.0));
        assert!(gradient_weight(&[]).is_empty());
    }

    #[test]
    fn running_mean_examples() {
        let r = running_mean_samples(&[0.0, 0.0, 6.0, 0.0, 0.0], 1);
        assert_eq!(r, vec![0.0, 2.0, 2.0, 2.0, 0.0]);
        let r = running_mean(&[2.5; 50], 40.0, 1000);
        assert!(r.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn composite_examples() {
        let flat = composite(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(flat, vec![0.0, 0.0]);
        let c = composite(&[vec![0.0, 2.0], vec![0.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(c, vec![0.0, 1.0]);
        let a = composite(&[vec![0.3, -1.0, 2.0], vec![0.1, 0.4, 0.0]]);
        let b = composite(&[vec![0.6, -2.0, 4.0], vec![0.2, 0.8, 0.0]]);
        assert_eq!(a, b);
    }

    #[test]
    fn entropy_of_uniform_and_silent_frames() {
        assert!((magnitude_entropy(&[1.0; 64]) - 6.0).abs() < 1e-12);
        let fe = FrameEntropy::new(160, 1e-6);
        assert_eq!(fe.entropy(&[0.0; 160]), 80f64.log2());
        let h = spectral_entropy(&[0.0; 400], 20.0, 8000, 1e-6).unwrap();
        assert_eq!(h.len(), 400);
        assert!(h.iter().all(|&v| v == 80f64.log2()));
    }

    #[test]
    fn entropy_window_too_small() {
        assert!(spectral_entropy(&[0.0; 100], 0.25, 8000, 1e-6).is_err());
    }

    #[test]
    fn median_convention() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[0.1, 0.1, 0.1, 0.7, 0.7, 0.1]), 0.1);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    fn surface(y_ds: Vec<f64>, rate: u32, block_ms: f64) -> DecisionSurface {
        let block = ms_to_samples(block_ms, rate);
        DecisionSurface {
            r_c: y_ds.clone(),
            inv_entropy: vec![1.0; y_ds.len()],
            thresholds: block_thresholds(&y_ds, block),
            y_ds,
            sample_rate_hz: rate,
        }
    }

    #[test]
    fn threshold_examples() {
        // at 20 Hz, six samples make one 300 ms block
        let mut c = cfg();
        c.threshold_block_ms = 300.0;
        let ds = surface(vec![0.0, 0.0, 0.9, 0.9, 0.0, 0.0], 20, 300.0);
        let segs = dynamic_threshold(&ds, &c);
        assert_eq!(segs.segments, vec![Segment::new(0.0, 0.3)]);

        let ds = surface(vec![0.1, 0.1, 0.1, 0.7, 0.7, 0.1], 20, 300.0);
        assert!((ds.thresholds[0].theta - (0.1 + 0.1 / 3.0)).abs() < 1e-15);
        let segs = dynamic_threshold(&ds, &c);
        assert_eq!(segs.segments, vec![Segment::new(3.0 / 20.0, 5.0 / 20.0)]);

        let ds = surface(vec![0.4; 12], 20, 300.0);
        assert!(dynamic_threshold(&ds, &c).is_empty());
    }

    #[test]
    fn smoothing_examples() {
        let c = cfg();
        let raw =
            SegmentList::new(vec![Segment::new(0.0, 0.10), Segment::new(0.12, 0.30)], 1.0).unwrap();
        assert_eq!(smooth(&raw, &c).segments, vec![Segment::new(0.0, 0.30)]);

        let raw = SegmentList::new(vec![Segment::new(0.0, 0.02)], 1.0).unwrap();
        assert!(smooth(&raw, &c).is_empty());

        let raw =
            SegmentList::new(vec![Segment::new(0.0, 0.1), Segment::new(0.2, 0.3)], 1.0).unwrap();
        assert_eq!(smooth(&raw, &c), raw);
    }

    #[test]
    fn merge_happens_before_drop() {
        // two 30 ms pieces 10 ms apart survive as one 70 ms segment
        let raw =
            SegmentList::new(vec![Segment::new(0.0, 0.03), Segment::new(0.04, 0.07)], 1.0).unwrap();
        let out = smooth(&raw, &cfg());
        assert_eq!(out.segments, vec![Segment::new(0.0, 0.07)]);
    }

    #[test]
    fn mask_runs() {
        let segs = mask_to_segments(&[false, true, true, false, true], 10);
        assert_eq!(
            segs.segments,
            vec![Segment::new(0.1, 0.3), Segment::new(0.4, 0.5)]
        );
        assert_eq!(segs.total_duration_s, 0.5);
        assert!(segs.validate().is_ok());
    }

    #[test]
    fn config_checks() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.entropy_window_ms = 400.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.merge_gap_ms = 0.0;
        assert!(c.validate().is_err());
        assert_eq!("y0".parse::<EntropySource>().unwrap(), EntropySource::Y0);
        assert!("x".parse::<EntropySource>().is_err());
    }
}
