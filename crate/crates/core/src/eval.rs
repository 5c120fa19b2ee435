//! Frame-level scoring of voiced/unvoiced decisions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::segments::SegmentList;

pub const DEFAULT_HOP_MS: f64 = 10.0;

/// Binary voicing labels at a fixed hop.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabels {
    pub labels: Vec<bool>,
    pub hop_ms: f64,
    pub duration_s: f64,
}

impl FrameLabels {
    pub fn frame_count(duration_s: f64, hop_ms: f64) -> usize {
        // guard against 0.1 * 1000 / 10 landing a hair above an integer
        (duration_s * 1000.0 / hop_ms - 1e-9).ceil().max(0.0) as usize
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn voiced_frames(&self) -> usize {
        self.labels.iter().filter(|&&v| v).count()
    }

    /// Runs of voiced frames as segments.
    pub fn to_segments(&self) -> SegmentList {
        let hop = self.hop_ms / 1000.0;
        let mut segments = Vec::new();
        let mut start = None;
        for (i, &v) in self
            .labels
            .iter()
            .chain(std::iter::once(&false))
            .enumerate()
        {
            match (v, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    let end = (i as f64 * hop).min(self.duration_s);
                    segments.push(crate::segments::Segment::new(s as f64 * hop, end));
                    start = None;
                }
                _ => {}
            }
        }
        SegmentList {
            segments,
            total_duration_s: self.duration_s,
        }
    }
}

/// Frame `f` spans `[f * hop, (f + 1) * hop)` and is voiced when at least half
/// of it overlaps a segment.
pub fn segments_to_frames(segs: &SegmentList, hop_ms: f64, duration_s: f64) -> FrameLabels {
    let hop = hop_ms / 1000.0;
    let count = FrameLabels::frame_count(duration_s, hop_ms);
    let mut labels = vec![false; count];
    let mut first = 0;
    for (f, label) in labels.iter_mut().enumerate() {
        let (a, b) = (f as f64 * hop, (f + 1) as f64 * hop);
        while first < segs.segments.len() && segs.segments[first].end_s <= a {
            first += 1;
        }
        let overlap: f64 = segs.segments[first..]
            .iter()
            .take_while(|s| s.start_s < b)
            .map(|s| s.overlap_s(a, b))
            .sum();
        *label = overlap >= 0.5 * hop - 1e-9;
    }
    FrameLabels {
        labels,
        hop_ms,
        duration_s,
    }
}

/// Frames of a detector's output at the precision of a written segment file,
/// so scores match whether segments are kept in memory or re-read from disk.
pub fn hypothesis_frames(segs: &SegmentList, hop_ms: f64, duration_s: f64) -> Result<FrameLabels> {
    let written = SegmentList::parse(&segs.to_text(), Some(duration_s), Path::new("<segments>"))?;
    Ok(segments_to_frames(&written, hop_ms, duration_s))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * (p * r) / (p + r)
        }
    }

    pub fn score(&self) -> Score {
        Score {
            counts: *self,
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores `hyp` against `reference`. Lengths may differ by one frame; the
/// shorter side is padded with unvoiced frames.
pub fn score(hyp: &FrameLabels, reference: &FrameLabels) -> Result<Score> {
    if (hyp.hop_ms - reference.hop_ms).abs() > 1e-9 {
        return Err(Error::HopMismatch {
            hyp_ms: hyp.hop_ms,
            ref_ms: reference.hop_ms,
        });
    }
    if hyp.len().abs_diff(reference.len()) > 1 {
        return Err(Error::LengthMismatch {
            hyp: hyp.len(),
            reference: reference.len(),
        });
    }
    let n = hyp.len().max(reference.len());
    let at = |l: &FrameLabels, i: usize| l.labels.get(i).copied().unwrap_or(false);
    let mut c = Counts::default();
    for i in 0..n {
        match (at(hyp, i), at(reference, i)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c.score())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileResult {
    pub file_id: String,
    pub condition: String,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupScore {
    pub condition: String,
    pub files: usize,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_file: Vec<FileResult>,
    /// Pooled scores per condition, in order of first appearance.
    pub groups: Vec<GroupScore>,
    pub overall: Score,
    /// Population standard deviation of the per-condition F1 values.
    pub f1_std_across_conditions: f64,
    /// Files that could not be processed, with the reason.
    pub skipped: Vec<(String, String)>,
}

pub const OVERALL_TAG: &str = "__overall__";

/// Pools counts per condition (micro-average) and overall.
pub fn aggregate(results: Vec<FileResult>) -> EvalReport {
    let mut order: Vec<String> = Vec::new();
    let mut pooled: BTreeMap<String, (usize, Counts)> = BTreeMap::new();
    for r in &results {
        let entry = pooled.entry(r.condition.clone()).or_insert_with(|| {
            order.push(r.condition.clone());
            (0, Counts::default())
        });
        entry.0 += 1;
        entry.1 = entry.1 + r.counts;
    }
    let groups: Vec<GroupScore> = order
        .into_iter()
        .map(|condition| {
            let (files, counts) = pooled[&condition];
            GroupScore {
                condition,
                files,
                score: counts.score(),
            }
        })
        .collect();
    let f1s: Vec<f64> = groups.iter().map(|g| g.score.f1).collect();
    let overall = results.iter().map(|r| r.counts).sum::<Counts>().score();
    EvalReport {
        per_file: results,
        groups,
        overall,
        f1_std_across_conditions: population_std(&f1s),
        skipped: Vec::new(),
    }
}

pub fn population_std(values: &[f64]) -> f64 {
    // identical values must give exactly zero, which the two-pass sum may not
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

impl EvalReport {
    /// `file_id,condition,tp,fp,fn,tn,precision,recall,f1`, one row per file,
    /// then one `__group__:<tag>` row per condition and one for the overall
    /// pool. Skipped files follow as `#` comment lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("file_id,condition,tp,fp,fn,tn,precision,recall,f1\n");
        let mut row = |id: &str, cond: &str, s: &Score| {
            let c = s.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6},{:.6}",
                csv_field(id),
                csv_field(cond),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                s.precision,
                s.recall,
                s.f1
            );
        };
        for f in &self.per_file {
            row(&f.file_id, &f.condition, &f.counts.score());
        }
        for g in &self.groups {
            row(
                &format!("__group__:{}", g.condition),
                &g.condition,
                &g.score,
            );
        }
        row(
            &format!("__group__:{OVERALL_TAG}"),
            OVERALL_TAG,
            &self.overall,
        );
        for (id, reason) in &self.skipped {
            let _ = writeln!(out, "# skipped {id}: {}", reason.replace('\n', " "));
        }
        out
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let _ = writeln!(
                out,
                "condition {:<12} files {:>4}  P {:.4}  R {:.4}  F1 {:.4}",
                g.condition, g.files, g.score.precision, g.score.recall, g.score.f1
            );
        }
        let _ = writeln!(
            out,
            "overall                files {:>4}  P {:.4}  R {:.4}  F1 {:.4}",
            self.per_file.len(),
            self.overall.precision,
            self.overall.recall,
            self.overall.f1
        );
        let _ = writeln!(
            out,
            "F1 std across conditions: {:.4}",
            self.f1_std_across_conditions
        );
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "skipped files: {}", self.skipped.len());
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Reads reference labels in either of two formats:
///
/// * a single line of `0`/`1` characters, one per frame;
/// * `start_s end_s` lines, converted with [`segments_to_frames`].
///
/// `duration_s` sets the frame count for the segment format; without it the
/// last segment end is used.
pub fn read_labels(
    path: impl AsRef<Path>,
    hop_ms: f64,
    duration_s: Option<f64>,
) -> Result<FrameLabels> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::UnknownFormat {
        path: path.to_path_buf(),
    })?;
    parse_labels(&text, hop_ms, duration_s, path)
}

pub fn parse_labels(
    text: &str,
    hop_ms: f64,
    duration_s: Option<f64>,
    origin: &Path,
) -> Result<FrameLabels> {
    let content: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if let [line] = content.as_slice() {
        if line.bytes().all(|b| b == b'0' || b == b'1') {
            let labels: Vec<bool> = line.bytes().map(|b| b == b'1').collect();
            let duration = labels.len() as f64 * hop_ms / 1000.0;
            return Ok(FrameLabels {
                labels,
                hop_ms,
                duration_s: duration,
            });
        }
    }
    let segs = SegmentList::parse(text, duration_s, origin)?;
    Ok(segments_to_frames(&segs, hop_ms, segs.total_duration_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segments::Segment;

    fn labels(bits: &[u8]) -> FrameLabels {
        FrameLabels {
            labels: bits.iter().map(|&b| b == 1).collect(),
            hop_ms: 10.0,
            duration_s: bits.len() as f64 * 0.01,
        }
    }

    #[test]
    fn frames_from_segments() {
        let segs = SegmentList::new(vec![Segment::new(0.0, 0.05)], 0.1).unwrap();
        let l = segments_to_frames(&segs, 10.0, 0.1);
        assert_eq!(l.labels, labels(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0]).labels);
        let l = segments_to_frames(&SegmentList::empty(0.1), 10.0, 0.1);
        assert_eq!(l.len(), 10);
        assert_eq!(l.voiced_frames(), 0);
        let segs = SegmentList::new(vec![Segment::new(0.004, 0.006)], 0.1).unwrap();
        assert_eq!(segments_to_frames(&segs, 10.0, 0.1).voiced_frames(), 0);
    }

    #[test]
    fn half_overlap_counts() {
        let segs = SegmentList::new(vec![Segment::new(0.005, 0.0151)], 0.03).unwrap();
        let l = segments_to_frames(&segs, 10.0, 0.03);
        assert_eq!(l.labels, vec![true, true, false]);
    }

    #[test]
    fn frame_count_rounds_up() {
        assert_eq!(FrameLabels::frame_count(0.1, 10.0), 10);
        assert_eq!(FrameLabels::frame_count(0.101, 10.0), 11);
        assert_eq!(FrameLabels::frame_count(0.0, 10.0), 0);
    }

    #[test]
    fn score_examples() {
        let s = score(&labels(&[1, 0, 1, 0]), &labels(&[1, 0, 1, 0])).unwrap();
        assert_eq!((s.counts.tp, s.counts.fp, s.counts.fn_), (2, 0, 0));
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let c = Counts {
            tp: 8,
            fp: 2,
            fn_: 2,
            tn: 0,
        };
        assert!((c.precision() - 0.8).abs() < 1e-15);
        assert!((c.recall() - 0.8).abs() < 1e-15);
        assert!((c.f1() - 0.8).abs() < 1e-15);

        let s = score(&labels(&[0, 0, 0]), &labels(&[1, 1, 0])).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn score_pads_and_checks() {
        let s = score(&labels(&[1, 1]), &labels(&[1, 1, 1])).unwrap();
        assert_eq!(s.counts.fn_, 1);
        assert!(score(&labels(&[1]), &labels(&[1, 1, 1])).is_err());
        let mut other = labels(&[1]);
        other.hop_ms = 20.0;
        assert!(matches!(
            score(&labels(&[1]), &other),
            Err(Error::HopMismatch { .. })
        ));
    }

    #[test]
    fn aggregate_examples() {
        let c = Counts {
            tp: 1,
            fp: 1,
            fn_: 0,
            tn: 0,
        };
        let r = aggregate(vec![
            FileResult {
                file_id: "a".into(),
                condition: "x".into(),
                counts: c,
            },
            FileResult {
                file_id: "b".into(),
                condition: "x".into(),
                counts: c,
            },
        ]);
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].score.precision, 0.5);
        assert_eq!(r.f1_std_across_conditions, 0.0);

        assert_eq!(population_std(&[0.8, 0.8, 0.8]), 0.0);
        assert!((population_std(&[0.6, 0.8]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn label_formats() {
        let p = Path::new("mem");
        let l = parse_labels("00110\n", 10.0, None, p).unwrap();
        assert_eq!(l.labels, vec![false, false, true, true, false]);
        let l = parse_labels("0.02 0.04\n", 10.0, Some(0.05), p).unwrap();
        assert_eq!(l.labels, vec![false, false, true, true, false]);
        match parse_labels("abc\n", 10.0, None, p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_layout() {
        let c = Counts {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 5,
        };
        let r = aggregate(vec![FileResult {
            file_id: "f,1".into(),
            condition: "clean".into(),
            counts: c,
        }]);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "file_id,condition,tp,fp,fn,tn,precision,recall,f1"
        );
        assert_eq!(lines[1], "\"f,1\",clean,3,1,1,5,0.750000,0.750000,0.750000");
        assert!(lines[2].starts_with("__group__:clean,clean,3,1,1,5"));
        assert!(lines[3].starts_with("__group__:__overall__"));
    }
}
