//! Synthetic noisy utterances with known voicing, for desk-scale evaluation.
//!
//! Voiced bursts are impulse trains at `f0` shaped by two resonances near
//! the first two formants, with 10 ms raised-cosine on/off ramps. Clean
//! speech is scaled to a fixed in-burst RMS, and noise is scaled against the
//! in-burst speech power to hit the requested SNR.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::SampleBuffer;
use crate::error::{Error, Result};
use crate::eval::{segments_to_frames, FrameLabels, DEFAULT_HOP_MS};
use crate::segments::{Segment, SegmentList};

/// The SNR conditions of the standard noisy-digits test sets, in dB.
pub const SNR_LADDER_DB: [f64; 6] = [20.0, 15.0, 10.0, 5.0, 0.0, -5.0];

/// In-burst RMS of clean synthetic speech.
pub const SPEECH_RMS: f64 = 0.05;

const RAMP_MS: f64 = 10.0;
// (centre Hz, bandwidth Hz)
const FORMANTS: [(f64, f64); 2] = [(700.0, 100.0), (1200.0, 120.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    /// Sum of detuned, formant-shaped pulse trains.
    Babble,
    Pink,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::Babble, NoiseKind::Pink];
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Self::White),
            "babble" | "babble-surrogate" => Ok(Self::Babble),
            "pink" => Ok(Self::Pink),
            other => Err(Error::InvalidSpec(format!(
                "unknown noise kind {other:?} (expected white, babble, or pink)"
            ))),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::White => "white",
            Self::Babble => "babble",
            Self::Pink => "pink",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub burst_layout: Vec<Segment>,
    pub f0_hz: f64,
    /// `None` for clean speech.
    pub snr_db: Option<f64>,
    pub noise_kind: NoiseKind,
    pub duration_s: f64,
    pub seed: u64,
    pub sample_rate_hz: u32,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration {} must be positive", self.duration_s));
        }
        if (self.duration_s * self.sample_rate_hz as f64).round() < 1.0 {
            return bad("duration is shorter than one sample".into());
        }
        if !(self.f0_hz.is_finite()
            && self.f0_hz > 0.0
            && self.f0_hz < self.sample_rate_hz as f64 / 2.0)
        {
            return bad(format!("f0 {} Hz outside (0, Nyquist)", self.f0_hz));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return bad("SNR must be finite".into());
            }
        }
        if SegmentList::new(self.burst_layout.clone(), self.duration_s).is_err() {
            return bad("bursts must be sorted, non-overlapping, and within the duration".into());
        }
        Ok(())
    }
}

/// Generates the utterance and its 10 ms reference labels.
pub fn synthesize(spec: &SynthSpec) -> Result<(SampleBuffer, FrameLabels)> {
    spec.validate()?;
    let rate = spec.sample_rate_hz as f64;
    let n = (spec.duration_s * rate).round() as usize;

    let mut excitation = vec![0.0; n];
    for b in &spec.burst_layout {
        let mut k = 0usize;
        loop {
            let t = b.start_s + k as f64 / spec.f0_hz;
            if t >= b.end_s {
                break;
            }
            let i = (t * rate).round() as usize;
            if i < n {
                excitation[i] = 1.0;
            }
            k += 1;
        }
    }
    let mut speech = FORMANTS
        .iter()
        .fold(excitation, |x, &(f, bw)| resonate(&x, f, bw, rate));
    let envelope = burst_envelope(&spec.burst_layout, n, rate);
    for (s, e) in speech.iter_mut().zip(&envelope) {
        *s *= e;
    }
    let in_burst = in_burst_mask(&spec.burst_layout, n, rate);
    let speech_power = mean_power(&speech, &in_burst);
    if speech_power > 0.0 {
        let g = SPEECH_RMS / speech_power.sqrt();
        speech.iter_mut().for_each(|s| *s *= g);
    }

    let mut signal = speech;
    if let Some(snr_db) = spec.snr_db {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut noise = match spec.noise_kind {
            NoiseKind::White => white(&mut rng, n),
            NoiseKind::Pink => pink(&mut rng, n),
            NoiseKind::Babble => babble(&mut rng, n, rate),
        };
        let noise_power = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
        // with no bursts the nominal speech level stands in
        let target = SPEECH_RMS * SPEECH_RMS / 10f64.powf(snr_db / 10.0);
        if noise_power > 0.0 {
            let g = (target / noise_power).sqrt();
            noise.iter_mut().for_each(|v| *v *= g);
        }
        for (s, v) in signal.iter_mut().zip(&noise) {
            *s += v;
        }
    }

    let layout = SegmentList::new(spec.burst_layout.clone(), spec.duration_s)?;
    let labels = segments_to_frames(&layout, DEFAULT_HOP_MS, spec.duration_s);
    Ok((SampleBuffer::new(signal, spec.sample_rate_hz)?, labels))
}

/// Measured SNR in dB: in-burst clean power over whole-file noise power.
pub fn realized_snr_db(clean: &[f64], noisy: &[f64], bursts: &[Segment], rate: u32) -> f64 {
    let mask = in_burst_mask(bursts, clean.len(), rate as f64);
    let ps = mean_power(clean, &mask);
    let noise: Vec<f64> = noisy.iter().zip(clean).map(|(a, b)| a - b).collect();
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    10.0 * (ps / pn).log10()
}

fn mean_power(x: &[f64], mask: &[bool]) -> f64 {
    let (sum, count) = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v * v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn burst_range(b: &Segment, n: usize, rate: f64) -> (usize, usize) {
    let a = ((b.start_s * rate).round() as usize).min(n);
    let e = ((b.end_s * rate).round() as usize).min(n);
    (a, e)
}

fn in_burst_mask(bursts: &[Segment], n: usize, rate: f64) -> Vec<bool> {
    let mut mask = vec![false; n];
    for b in bursts {
        let (a, e) = burst_range(b, n, rate);
        mask[a..e].iter_mut().for_each(|m| *m = true);
    }
    mask
}

fn burst_envelope(bursts: &[Segment], n: usize, rate: f64) -> Vec<f64> {
    let mut env = vec![0.0; n];
    let ramp = ((RAMP_MS / 1000.0 * rate).round() as usize).max(1);
    for b in bursts {
        let (a, e) = burst_range(b, n, rate);
        let len = e - a;
        let r = ramp.min(len / 2).max(1);
        for (k, v) in env[a..e].iter_mut().enumerate() {
            let edge = k.min(len - 1 - k);
            *v = if edge >= r {
                1.0
            } else {
                0.5 - 0.5 * (PI * edge as f64 / r as f64).cos()
            };
        }
    }
    env
}

/// Two-pole resonator at `freq` Hz with bandwidth `bw` Hz.
fn resonate(x: &[f64], freq: f64, bw: f64, rate: f64) -> Vec<f64> {
    let r = (-PI * bw / rate).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / rate).cos();
    let a2 = -r * r;
    let mut out = Vec::with_capacity(x.len());
    let (mut y1, mut y2) = (0.0, 0.0);
    for &v in x {
        let y = v + a1 * y1 + a2 * y2;
        out.push(y);
        y2 = y1;
        y1 = y;
    }
    out
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

// Paul Kellet's refined pink filter over white noise
fn pink(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let out = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
            b[6] = w * 0.115926;
            out
        })
        .collect()
}

fn babble(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<f64> {
    const TALKERS: usize = 6;
    let mut mix = vec![0.0; n];
    for _ in 0..TALKERS {
        let f0 = rng.random_range(90.0..250.0);
        let phase = rng.random_range(0.0..1.0);
        let mut excitation = vec![0.0; n];
        let mut k = phase;
        loop {
            let i = (k * rate / f0).round() as usize;
            if i >= n {
                break;
            }
            excitation[i] = 1.0;
            k += 1.0;
        }
        let voiced = FORMANTS.iter().fold(excitation, |x, &(f, bw)| {
            resonate(&x, f * rng.random_range(0.85..1.15), bw, rate)
        });
        for (m, v) in mix.iter_mut().zip(&voiced) {
            *m += v;
        }
    }
    let mean = mix.iter().sum::<f64>() / n as f64;
    mix.iter_mut().for_each(|v| *v -= mean);
    mix
}

/// One utterance layout: burst positions, voice pitch, and total length.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub bursts: Vec<Segment>,
    pub f0_hz: f64,
    pub duration_s: f64,
}

impl Layout {
    pub fn spec(
        &self,
        snr_db: Option<f64>,
        noise_kind: NoiseKind,
        seed: u64,
        rate: u32,
    ) -> SynthSpec {
        SynthSpec {
            burst_layout: self.bursts.clone(),
            f0_hz: self.f0_hz,
            snr_db,
            noise_kind,
            duration_s: self.duration_s,
            seed,
            sample_rate_hz: rate,
        }
    }
}

/// Digit-string-like layouts: 150-400 ms of leading silence, two to five
/// "words" of 250-550 ms separated by 80-300 ms pauses, and 150-400 ms of
/// trailing silence. All times are whole milliseconds.
pub fn random_layouts(count: usize, seed: u64) -> Vec<Layout> {
    const F0_CHOICES: [f64; 5] = [90.0, 110.0, 130.0, 160.0, 200.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ms = |lo: u32, hi: u32| rng.random_range(lo..=hi);
    (0..count)
        .map(|_| {
            let mut t = ms(150, 400);
            let words = ms(2, 5);
            let mut bursts = Vec::with_capacity(words as usize);
            for w in 0..words {
                if w > 0 {
                    t += ms(80, 300);
                }
                let len = ms(250, 550);
                bursts.push(Segment::new(t as f64 / 1000.0, (t + len) as f64 / 1000.0));
                t += len;
            }
            t += ms(150, 400);
            let f0 = F0_CHOICES[ms(0, F0_CHOICES.len() as u32 - 1) as usize];
            Layout {
                bursts,
                f0_hz: f0,
                duration_s: t as f64 / 1000.0,
            }
        })
        .collect()
}

/// One file of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    /// File stem, e.g. `u003_white_-5dB`.
    pub name: String,
    /// Condition tag used for grouping, `clean` or e.g. `white_10dB`.
    pub condition: String,
    pub spec: SynthSpec,
}

/// Condition tag of one SNR and noise kind; `None` is clean speech.
pub fn condition_tag(snr_db: Option<f64>, kind: NoiseKind) -> String {
    match snr_db {
        None => "clean".to_string(),
        Some(snr) => format!("{kind}_{snr}dB"),
    }
}

/// Every layout under every condition. Clean speech is generated once per
/// layout whatever the noise kinds. Noise seeds are drawn from `seed`, so a
/// corpus is reproducible from its arguments alone.
pub fn corpus(
    layouts: &[Layout],
    snrs_db: &[Option<f64>],
    kinds: &[NoiseKind],
    seed: u64,
    sample_rate_hz: u32,
) -> Vec<CorpusItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conditions: Vec<(Option<f64>, NoiseKind)> = Vec::new();
    for &snr in snrs_db {
        match snr {
            None => conditions.push((None, NoiseKind::White)),
            Some(_) => conditions.extend(kinds.iter().map(|&k| (snr, k))),
        }
    }
    let mut items = Vec::with_capacity(conditions.len() * layouts.len());
    for (snr, kind) in conditions {
        let condition = condition_tag(snr, kind);
        for (i, layout) in layouts.iter().enumerate() {
            let noise_seed: u64 = rng.random();
            items.push(CorpusItem {
                name: format!("u{i:03}_{condition}"),
                condition: condition.clone(),
                spec: layout.spec(snr, kind, noise_seed, sample_rate_hz),
            });
        }
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(snr: Option<f64>, kind: NoiseKind) -> SynthSpec {
        SynthSpec {
            burst_layout: vec![Segment::new(0.2, 0.6), Segment::new(0.9, 1.3)],
            f0_hz: 120.0,
            snr_db: snr,
            noise_kind: kind,
            duration_s: 1.5,
            seed: 11,
            sample_rate_hz: 8000,
        }
    }

    #[test]
    fn no_bursts_is_pure_noise() {
        let mut s = spec(Some(10.0), NoiseKind::White);
        s.burst_layout.clear();
        let (buf, labels) = synthesize(&s).unwrap();
        assert_eq!(labels.voiced_frames(), 0);
        assert_eq!(labels.len(), 150);
        let p = buf.samples().iter().map(|v| v * v).sum::<f64>() / buf.len() as f64;
        assert!((10.0 * (SPEECH_RMS * SPEECH_RMS / p).log10() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn clean_is_silent_outside_bursts() {
        let (buf, labels) = synthesize(&spec(None, NoiseKind::White)).unwrap();
        assert!(buf.samples()[..1600].iter().all(|&v| v == 0.0));
        assert!(buf.samples()[4800..7200].iter().all(|&v| v == 0.0));
        assert_eq!(labels.voiced_frames(), 80);
        assert!(buf.samples().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn snr_is_hit_for_every_noise_kind() {
        let (clean, _) = synthesize(&spec(None, NoiseKind::White)).unwrap();
        for kind in NoiseKind::ALL {
            for snr in [20.0, 0.0, -5.0] {
                let s = spec(Some(snr), kind);
                let (noisy, _) = synthesize(&s).unwrap();
                let got = realized_snr_db(clean.samples(), noisy.samples(), &s.burst_layout, 8000);
                assert!((got - snr).abs() < 0.1, "{kind} {snr}: {got}");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize(&spec(Some(5.0), NoiseKind::Babble)).unwrap();
        let b = synthesize(&spec(Some(5.0), NoiseKind::Babble)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(Some(5.0), NoiseKind::Babble);
        other.seed = 12;
        assert_ne!(synthesize(&other).unwrap().0, a.0);
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(None, NoiseKind::White);
        s.burst_layout = vec![Segment::new(0.2, 0.6), Segment::new(0.5, 0.8)];
        assert!(matches!(synthesize(&s), Err(Error::InvalidSpec(_))));
        let mut s = spec(None, NoiseKind::White);
        s.burst_layout = vec![Segment::new(1.2, 1.8)];
        assert!(synthesize(&s).is_err());
        let mut s = spec(None, NoiseKind::White);
        s.f0_hz = 0.0;
        assert!(synthesize(&s).is_err());
        assert!("brown".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn layouts_are_valid_and_reproducible() {
        let a = random_layouts(10, 3);
        assert_eq!(a, random_layouts(10, 3));
        for l in &a {
            assert!(SegmentList::new(l.bursts.clone(), l.duration_s).is_ok());
            assert!((2..=5).contains(&l.bursts.len()));
        }
    }

    #[test]
    fn corpus_counts_and_tags() {
        let layouts = random_layouts(10, 0);
        let mut snrs = vec![None];
        snrs.extend(SNR_LADDER_DB.map(Some));
        let items = corpus(&layouts, &snrs, &[NoiseKind::White], 0, 8000);
        assert_eq!(items.len(), 70);
        assert_eq!(items[0].condition, "clean");
        assert_eq!(items[69].name, "u009_white_-5dB");
        let two = corpus(&layouts, &snrs, &NoiseKind::ALL[..2], 0, 8000);
        assert_eq!(two.len(), 130);
        assert_eq!(items, corpus(&layouts, &snrs, &[NoiseKind::White], 0, 8000));
    }
}
