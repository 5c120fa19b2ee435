//! Voiced intervals and their plain-text representation.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Half-open interval `[start_s, end_s)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn overlap_s(&self, start_s: f64, end_s: f64) -> f64 {
        (self.end_s.min(end_s) - self.start_s.max(start_s)).max(0.0)
    }
}

/// Sorted, non-overlapping voiced segments of one file.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentList {
    pub segments: Vec<Segment>,
    pub total_duration_s: f64,
}

impl SegmentList {
    pub fn empty(total_duration_s: f64) -> Self {
        Self {
            segments: Vec::new(),
            total_duration_s,
        }
    }

    /// Builds a list, checking ordering, bounds, and separation.
    pub fn new(segments: Vec<Segment>, total_duration_s: f64) -> Result<Self> {
        let list = Self {
            segments,
            total_duration_s,
        };
        list.validate()?;
        Ok(list)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("segment list: {msg}")));
        if !(self.total_duration_s >= 0.0 && self.total_duration_s.is_finite()) {
            return bad(format!("duration {} is invalid", self.total_duration_s));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(0.0 <= s.start_s && s.start_s < s.end_s && s.end_s <= self.total_duration_s) {
                return bad(format!(
                    "segment {i} [{}, {}) outside [0, {}] or empty",
                    s.start_s, s.end_s, self.total_duration_s
                ));
            }
        }
        for (i, w) in self.segments.windows(2).enumerate() {
            if w[1].start_s <= w[0].end_s {
                return bad(format!("segments {i} and {} overlap or touch", i + 1));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn voiced_duration_s(&self) -> f64 {
        self.segments.iter().map(Segment::duration_s).sum()
    }

    /// Boundaries rounded to whole milliseconds, the precision of segment files.
    ///
    /// Segments that end up touching are joined and empty ones dropped.
    pub fn quantized_ms(&self) -> SegmentList {
        let to_ms = |t: f64| (t * 1000.0).round() as i64;
        let total_ms = to_ms(self.total_duration_s);
        let mut out: Vec<(i64, i64)> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let (a, b) = (to_ms(s.start_s).max(0), to_ms(s.end_s).min(total_ms));
            if b <= a {
                continue;
            }
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        SegmentList {
            segments: out
                .into_iter()
                .map(|(a, b)| Segment::new(a as f64 / 1000.0, b as f64 / 1000.0))
                .collect(),
            total_duration_s: total_ms as f64 / 1000.0,
        }
    }

    /// One `start_s end_s` line per segment, three decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.quantized_ms().segments {
            let _ = writeln!(out, "{} {}", fmt_ms(s.start_s), fmt_ms(s.end_s));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parses `start_s end_s` lines; blank lines and `#` comments are skipped.
    ///
    /// When `total_duration_s` is `None` the last segment end is used.
    pub fn parse(text: &str, total_duration_s: Option<f64>, origin: &Path) -> Result<Self> {
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(format!(
                    "expected `start_s end_s`, found {line:?}"
                )));
            }
            let num = |f: &str| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("{f:?} is not a number")))
            };
            let (a, b) = (num(fields[0])?, num(fields[1])?);
            if !(0.0 <= a && a < b) {
                return Err(parse_err(format!("invalid interval [{a}, {b})")));
            }
            if let Some(prev) = segments.last() {
                let prev: &Segment = prev;
                if a < prev.end_s {
                    return Err(parse_err("segments must be sorted and disjoint".into()));
                }
            }
            segments.push(Segment::new(a, b));
        }
        let total =
            total_duration_s.unwrap_or_else(|| segments.last().map_or(0.0, |s: &Segment| s.end_s));
        // clip to the audio length; labels may run a few ms past the file end
        let mut clipped: Vec<Segment> = Vec::with_capacity(segments.len());
        for s in segments {
            let end = s.end_s.min(total);
            if end <= s.start_s {
                continue;
            }
            match clipped.last_mut() {
                Some(last) if s.start_s <= last.end_s => last.end_s = last.end_s.max(end),
                _ => clipped.push(Segment::new(s.start_s, end)),
            }
        }
        Ok(SegmentList {
            segments: clipped,
            total_duration_s: total,
        })
    }

    pub fn read(path: impl AsRef<Path>, total_duration_s: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, total_duration_s, path)
    }
}

fn fmt_ms(t: f64) -> String {
    let ms = (t * 1000.0).round() as i64;
    format!("{}.{:03}", ms / 1000, ms % 1000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(
            SegmentList::new(vec![Segment::new(0.0, 0.1), Segment::new(0.2, 0.3)], 1.0).is_ok()
        );
        assert!(
            SegmentList::new(vec![Segment::new(0.0, 0.1), Segment::new(0.1, 0.3)], 1.0).is_err()
        );
        assert!(SegmentList::new(vec![Segment::new(0.2, 0.1)], 1.0).is_err());
        assert!(SegmentList::new(vec![Segment::new(0.5, 1.5)], 1.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let list = SegmentList::new(
            vec![Segment::new(0.0125, 0.25), Segment::new(1.0, 2.3456)],
            3.0,
        )
        .unwrap();
        let text = list.to_text();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l
            .split(' ')
            .all(|f| f.split('.').nth(1).unwrap().len() == 3)));
        let back = SegmentList::parse(&text, Some(3.0), Path::new("mem")).unwrap();
        assert_eq!(back, list.quantized_ms());
    }

    #[test]
    fn quantization_joins_touching() {
        let list = SegmentList::new(
            vec![Segment::new(0.1, 0.2001), Segment::new(0.2004, 0.3)],
            1.0,
        )
        .unwrap();
        let q = list.quantized_ms();
        assert_eq!(q.segments, vec![Segment::new(0.1, 0.3)]);
    }

    #[test]
    fn parse_errors_name_line() {
        let err = SegmentList::parse("0.1 0.2\nabc\n", None, Path::new("x.seg")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        assert!(SegmentList::parse("0.3 0.2\n", None, Path::new("x")).is_err());
        assert!(SegmentList::parse("0.1 0.3\n0.2 0.4\n", None, Path::new("x")).is_err());
    }
}
