//! Zero-frequency filtering.
//!
//! The input is passed through the double integrator `1 / (1 - z^-1)^2`, the
//! fundamental period `T0` is estimated by autocorrelation, and the local
//! mean over windows of `T0 / d` is removed for each divisor `d`. The
//! resulting channels carry excitation (`T0`) and low-formant (`T0/5`,
//! `T0/10`) evidence; epochs sit at their negative-to-positive zero crossings.

use crate::audio::{ms_to_samples, SampleBuffer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ZffConfig {
    /// Trend-removal windows are `T0 / d` for each divisor `d`.
    pub window_divisors: Vec<f64>,
    /// Lag search range for `T0`, as (min, max) fundamental frequency.
    pub f0_search_hz: (f64, f64),
    /// `T0` used when the autocorrelation shows no periodic peak.
    pub t0_fallback_ms: f64,
    /// Normalised autocorrelation (r(lag) / r(0)) the peak must exceed to be
    /// accepted as periodic.
    pub t0_min_correlation: f64,
}

impl Default for ZffConfig {
    fn default() -> Self {
        Self {
            window_divisors: vec![1.0, 5.0, 10.0],
            f0_search_hz: (60.0, 400.0),
            t0_fallback_ms: 5.0,
            t0_min_correlation: 0.1,
        }
    }
}

impl ZffConfig {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.window_divisors.is_empty() {
            return bad("window_divisors must not be empty".into());
        }
        if self
            .window_divisors
            .iter()
            .any(|d| !(d.is_finite() && *d > 0.0))
        {
            return bad("window_divisors must be positive".into());
        }
        if self.window_divisors.windows(2).any(|w| w[0] >= w[1]) {
            return bad("window_divisors must be strictly increasing".into());
        }
        let (lo, hi) = self.f0_search_hz;
        if !(lo > 0.0 && lo < hi && hi < sample_rate_hz as f64 / 2.0) {
            return bad(format!(
                "f0 search range ({lo}, {hi}) Hz must satisfy 0 < min < max < {}",
                sample_rate_hz as f64 / 2.0
            ));
        }
        if !(self.t0_fallback_ms.is_finite() && self.t0_fallback_ms > 0.0) {
            return bad("t0_fallback_ms must be positive".into());
        }
        if !(0.0..1.0).contains(&self.t0_min_correlation) {
            return bad("t0_min_correlation must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Integrator output, trend-removed channels, and their epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ZffBank {
    /// Mean-removed input signal.
    pub signal: Vec<f64>,
    /// Double-integrator output of the mean-removed input.
    pub x: Vec<f64>,
    /// One trend-removed channel per window divisor.
    pub y: Vec<Vec<f64>>,
    /// Odd trend-removal window per channel, in samples.
    pub windows: Vec<usize>,
    pub t0_samples: usize,
    /// Negative-to-positive zero crossings per channel.
    pub gci_indices: Vec<Vec<usize>>,
    pub sample_rate_hz: u32,
}

impl ZffBank {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn remove_mean(samples: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    samples.iter().map(|v| v - mean).collect()
}

/// Runs `x[n] = s[n] + 2 x[n-1] - x[n-2]` from rest.
///
/// The input is filtered as given; callers remove the mean first, since a
/// DC offset grows quadratically through the cascade.
pub fn zero_frequency_filter(samples: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    let (mut x1, mut x2) = (0.0f64, 0.0f64);
    for (n, &s) in samples.iter().enumerate() {
        let x = s + 2.0 * x1 - x2;
        if !x.is_finite() {
            return Err(Error::NonFiniteOutput { index: n });
        }
        out.push(x);
        x2 = x1;
        x1 = x;
    }
    Ok(out)
}

/// Whole-utterance fundamental period in samples.
///
/// Picks the lag maximising the biased autocorrelation of the mean-removed
/// signal within the configured f0 range. Falls back to `t0_fallback_ms`
/// when the normalised peak does not exceed `t0_min_correlation`.
pub fn estimate_t0(signal: &SampleBuffer, cfg: &ZffConfig) -> Result<usize> {
    let rate = signal.sample_rate_hz();
    cfg.validate(rate)?;
    let (f0_min, f0_max) = cfg.f0_search_hz;
    let required = (2.0 * rate as f64 / f0_min).ceil() as usize;
    if signal.len() < required {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            required,
        });
    }
    let fallback = ms_to_samples(cfg.t0_fallback_ms, rate).max(1);
    let s = remove_mean(signal.samples());
    let min_lag = ((rate as f64 / f0_max).ceil() as usize).max(1);
    let max_lag = (rate as f64 / f0_min).floor() as usize;

    let energy = autocorrelation(&s, 0);
    if energy <= 0.0 {
        return Ok(fallback);
    }
    let mut best = (min_lag, f64::NEG_INFINITY);
    for lag in min_lag..=max_lag {
        let r = autocorrelation(&s, lag);
        if r > best.1 {
            best = (lag, r);
        }
    }
    if best.1 / energy <= cfg.t0_min_correlation {
        return Ok(fallback);
    }
    Ok(best.0)
}

fn autocorrelation(s: &[f64], lag: usize) -> f64 {
    let sum: f64 = s.iter().zip(&s[lag..]).map(|(a, b)| a * b).sum();
    sum / s.len() as f64
}

/// Nearest odd integer to `t0 / divisor`, at least 3. Halves round up.
pub fn trend_window(t0_samples: usize, divisor: f64) -> usize {
    let target = t0_samples as f64 / divisor;
    let odd = 2.0 * ((target - 1.0) / 2.0).round() + 1.0;
    (odd.max(3.0)) as usize
}

/// Subtracts the centred local mean over `window = 2N + 1` samples.
///
/// Samples with a full window follow the textbook definition exactly. Within
/// `N` samples of either end the window shrinks symmetrically to the largest
/// half-width that fits, which keeps polynomial trends unbiased. Window sums
/// come from compensated prefix sums, so cost is linear in the signal length
/// and large integrator outputs do not lose precision.
pub fn trend_remove(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidWindow(window));
    }
    if x.len() <= window {
        return Err(Error::WindowTooLarge {
            window,
            len: x.len(),
        });
    }
    let half = window / 2;
    let prefix = CompensatedPrefix::new(x);
    let last = x.len() - 1;
    Ok(x.iter()
        .enumerate()
        .map(|(n, &v)| {
            let k = half.min(n).min(last - n);
            let (a, b) = (n - k, n + k + 1);
            v - prefix.range_sum(a, b) / (b - a) as f64
        })
        .collect())
}

/// Prefix sums carried as an unevaluated (high, low) pair.
pub(crate) struct CompensatedPrefix {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl CompensatedPrefix {
    pub(crate) fn new(x: &[f64]) -> Self {
        let mut hi = Vec::with_capacity(x.len() + 1);
        let mut lo = Vec::with_capacity(x.len() + 1);
        hi.push(0.0);
        lo.push(0.0);
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for &v in x {
            // Knuth two-sum: s + v == t + err exactly
            let t = s + v;
            let bv = t - s;
            let err = (s - (t - bv)) + (v - bv);
            s = t;
            c += err;
            hi.push(s);
            lo.push(c);
        }
        Self { hi, lo }
    }

    /// Sum of `x[a..b]`.
    pub(crate) fn range_sum(&self, a: usize, b: usize) -> f64 {
        (self.hi[b] - self.hi[a]) + (self.lo[b] - self.lo[a])
    }
}

/// Indices `n` with `y[n-1] < 0 <= y[n]`.
pub fn negative_to_positive_crossings(y: &[f64]) -> Vec<usize> {
    y.windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
        .map(|(i, _)| i + 1)
        .collect()
}

pub fn compute_bank(signal: &SampleBuffer, cfg: &ZffConfig) -> Result<ZffBank> {
    cfg.validate(signal.sample_rate_hz())?;
    let t0_samples = estimate_t0(signal, cfg)?;
    let centred = remove_mean(signal.samples());
    let x = zero_frequency_filter(&centred)?;
    let windows: Vec<usize> = cfg
        .window_divisors
        .iter()
        .map(|&d| trend_window(t0_samples, d))
        .collect();
    let y = windows
        .iter()
        .map(|&w| trend_remove(&x, w))
        .collect::<Result<Vec<_>>>()?;
    let gci_indices = y
        .iter()
        .map(|c| negative_to_positive_crossings(c))
        .collect();
    Ok(ZffBank {
        signal: centred,
        x,
        y,
        windows,
        t0_samples,
        gci_indices,
        sample_rate_hz: signal.sample_rate_hz(),
    })
}
