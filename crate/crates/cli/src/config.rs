//! Run configuration: library defaults, overridden by a `key = value` file,
//! overridden in turn by command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use zffvad::synth::{NoiseKind, SNR_LADDER_DB};
use zffvad::{EntropySource, PipelineConfig, ZffConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub zff: ZffConfig,
    pub pipeline: PipelineConfig,
    pub hop_ms: f64,
    pub jobs: usize,
    pub out_dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub external_segments: Option<PathBuf>,
    pub synth_layouts: usize,
    /// `None` entries are clean speech.
    pub synth_snr_db: Vec<Option<f64>>,
    pub synth_noise: Vec<NoiseKind>,
    pub synth_seed: u64,
    pub synth_sample_rate_hz: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut ladder = vec![None];
        ladder.extend(SNR_LADDER_DB.map(Some));
        Self {
            zff: ZffConfig::default(),
            pipeline: PipelineConfig::default(),
            hop_ms: zffvad::eval::DEFAULT_HOP_MS,
            jobs: 1,
            out_dir: None,
            report: None,
            external_segments: None,
            synth_layouts: 10,
            synth_snr_db: ladder,
            synth_noise: vec![NoiseKind::White],
            synth_seed: 0,
            synth_sample_rate_hz: 8000,
        }
    }
}

pub const KEYS: &[&str] = &[
    "window_divisors",
    "f0_min_hz",
    "f0_max_hz",
    "t0_fallback_ms",
    "t0_min_correlation",
    "running_mean_ms",
    "entropy_window_ms",
    "threshold_block_ms",
    "min_segment_ms",
    "merge_gap_ms",
    "entropy_floor",
    "entropy_source",
    "hop_ms",
    "jobs",
    "out_dir",
    "report",
    "external_segments",
    "synth_layouts",
    "synth_snr_db",
    "synth_noise",
    "synth_seed",
    "synth_sample_rate_hz",
];

impl RunConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "window_divisors" => self.zff.window_divisors = parse_list(v, parse_f64)?,
            "f0_min_hz" => self.zff.f0_search_hz.0 = parse_f64(v)?,
            "f0_max_hz" => self.zff.f0_search_hz.1 = parse_f64(v)?,
            "t0_fallback_ms" => self.zff.t0_fallback_ms = parse_f64(v)?,
            "t0_min_correlation" => self.zff.t0_min_correlation = parse_f64(v)?,
            "running_mean_ms" => self.pipeline.running_mean_ms = parse_f64(v)?,
            "entropy_window_ms" => self.pipeline.entropy_window_ms = parse_f64(v)?,
            "threshold_block_ms" => self.pipeline.threshold_block_ms = parse_f64(v)?,
            "min_segment_ms" => self.pipeline.min_segment_ms = parse_f64(v)?,
            "merge_gap_ms" => self.pipeline.merge_gap_ms = parse_f64(v)?,
            "entropy_floor" => self.pipeline.entropy_floor = parse_f64(v)?,
            "entropy_source" => {
                self.pipeline.entropy_source =
                    v.parse::<EntropySource>().map_err(|e| e.to_string())?
            }
            "hop_ms" => self.hop_ms = parse_f64(v)?,
            "jobs" => self.jobs = parse_int(v)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            "report" => self.report = Some(PathBuf::from(v)),
            "external_segments" => self.external_segments = Some(PathBuf::from(v)),
            "synth_layouts" => self.synth_layouts = parse_int(v)?,
            "synth_snr_db" => self.synth_snr_db = parse_list(v, parse_snr)?,
            "synth_noise" => {
                self.synth_noise =
                    parse_list(v, |s| s.parse::<NoiseKind>().map_err(|e| e.to_string()))?
            }
            "synth_seed" => self.synth_seed = parse_int(v)?,
            "synth_sample_rate_hz" => self.synth_sample_rate_hz = parse_int(v)?,
            _ => {
                return Err(format!(
                    "unknown key {key:?}; known keys: {}",
                    KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |m: String| CliError::Config(format!("{}:{}: {m}", origin.display(), i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, found {line:?}")))?;
            self.set(key.trim(), value).map_err(fail)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    /// Enforces every library-level invariant up front.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.pipeline
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        // the Nyquist bound on f0 waits for each file's sample rate
        self.zff
            .validate(u32::MAX)
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.hop_ms.is_finite() && self.hop_ms > 0.0) {
            return bad(format!("hop_ms {} must be positive", self.hop_ms));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.synth_sample_rate_hz == 0 {
            return bad("synth_sample_rate_hz must be positive".into());
        }
        if self.synth_snr_db.is_empty() || self.synth_noise.is_empty() {
            return bad("synth_snr_db and synth_noise must not be empty".into());
        }
        Ok(())
    }

    /// The configuration as a file that [`RunConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("window_divisors", join(&self.zff.window_divisors));
        kv("f0_min_hz", self.zff.f0_search_hz.0.to_string());
        kv("f0_max_hz", self.zff.f0_search_hz.1.to_string());
        kv("t0_fallback_ms", self.zff.t0_fallback_ms.to_string());
        kv(
            "t0_min_correlation",
            self.zff.t0_min_correlation.to_string(),
        );
        kv("running_mean_ms", self.pipeline.running_mean_ms.to_string());
        kv(
            "entropy_window_ms",
            self.pipeline.entropy_window_ms.to_string(),
        );
        kv(
            "threshold_block_ms",
            self.pipeline.threshold_block_ms.to_string(),
        );
        kv("min_segment_ms", self.pipeline.min_segment_ms.to_string());
        kv("merge_gap_ms", self.pipeline.merge_gap_ms.to_string());
        kv("entropy_floor", self.pipeline.entropy_floor.to_string());
        kv("entropy_source", self.pipeline.entropy_source.to_string());
        kv("hop_ms", self.hop_ms.to_string());
        kv("jobs", self.jobs.to_string());
        for (k, p) in [
            ("out_dir", &self.out_dir),
            ("report", &self.report),
            ("external_segments", &self.external_segments),
        ] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        kv("synth_layouts", self.synth_layouts.to_string());
        kv(
            "synth_snr_db",
            self.synth_snr_db
                .iter()
                .map(|s| s.map_or("clean".to_string(), |v| v.to_string()))
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "synth_noise",
            self.synth_noise
                .iter()
                .map(NoiseKind::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("synth_seed", self.synth_seed.to_string());
        kv(
            "synth_sample_rate_hz",
            self.synth_sample_rate_hz.to_string(),
        );
        out
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{s:?} is not a finite number"))
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>()
        .map_err(|_| format!("{s:?} is not a non-negative integer"))
}

pub fn parse_snr(s: &str) -> Result<Option<f64>, String> {
    if s.eq_ignore_ascii_case("clean") {
        Ok(None)
    } else {
        parse_f64(s.trim_end_matches("dB")).map(Some)
    }
}

pub fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(item)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.pipeline.merge_gap_ms = 25.0;
        cfg.synth_snr_db = vec![None, Some(-5.0)];
        cfg.synth_noise = vec![NoiseKind::Pink, NoiseKind::Babble];
        cfg.report = Some(PathBuf::from("out dir/eval.csv"));
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = RunConfig {
            report: Some("r.csv".into()),
            out_dir: Some("o".into()),
            external_segments: Some("e".into()),
            ..Default::default()
        };
        let keys: Vec<String> = cfg
            .to_text()
            .lines()
            .map(|l| l.split(" = ").next().unwrap().to_string())
            .collect();
        assert_eq!(keys, KEYS);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_text("# c\nmerge_gap = 3\n", Path::new("a.conf"))
            .unwrap_err();
        assert!(err.to_string().contains("a.conf:2"), "{err}");
        assert!(cfg.apply_text("hop_ms = fast\n", Path::new("a")).is_err());
        assert!(cfg
            .apply_text("entropy_source = x\n", Path::new("a"))
            .is_err());
        assert!(cfg.apply_text("no equals sign\n", Path::new("a")).is_err());
    }

    #[test]
    fn invariants_checked_at_parse_time() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("window_divisors = 5,1\n", Path::new("a"))
            .unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.apply_text("entropy_window_ms = 400\n", Path::new("a"))
            .unwrap();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn snr_lists() {
        assert_eq!(
            parse_list("clean, 20,-5dB", parse_snr).unwrap(),
            vec![None, Some(20.0), Some(-5.0)]
        );
        assert!(parse_list("loud", parse_snr).is_err());
    }
}
