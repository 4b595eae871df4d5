//! Score and ground-truth text files.
//!
//! * Scores: UTF-8 lines `video id<TAB>s0,s1,…` with one score per segment.
//! * Ground truth: `video id<TAB>frame count<TAB>start-end,…` where each
//!   range is half-open; the third field is empty for normal videos.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::roc::expand_scores;
use crate::binio::{read_file, write_atomic};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VideoScores {
    pub video_id: String,
    pub segments: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthEntry {
    pub video_id: String,
    pub frames: usize,
    pub intervals: Vec<(usize, usize)>,
}

impl TruthEntry {
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.frames];
        for &(a, b) in &self.intervals {
            m[a..b].fill(true);
        }
        m
    }
}

pub fn format_scores(scores: &[VideoScores]) -> String {
    let mut s = String::new();
    for v in scores {
        let vals: Vec<String> = v.segments.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "{}\t{}", v.video_id, vals.join(","));
    }
    s
}

pub fn parse_scores(path: &Path, text: &str) -> Result<Vec<VideoScores>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |msg: &str| Error::format(path, format!("line {}: {msg}", i + 1));
        let (id, vals) = line.split_once('\t').ok_or_else(|| bad("expected `id<TAB>scores`"))?;
        let segments = vals
            .split(',')
            .map(|v| v.parse::<f32>().map_err(|_| bad(&format!("bad score `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(VideoScores { video_id: id.to_string(), segments });
    }
    Ok(out)
}

pub fn write_scores_file(scores: &[VideoScores], path: &Path) -> Result<()> {
    write_atomic(path, format_scores(scores).as_bytes())
}

pub fn read_scores_file(path: &Path) -> Result<Vec<VideoScores>> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
    parse_scores(path, text)
}

pub fn parse_truth(path: &Path, text: &str) -> Result<Vec<TruthEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |msg: String| Error::format(path, format!("line {}: {msg}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected `id<TAB>frames<TAB>intervals`".into()));
        }
        let frames: usize = f[1].parse().map_err(|_| bad(format!("bad frame count `{}`", f[1])))?;
        let mut intervals = Vec::new();
        for span in f[2].split(',').filter(|s| !s.is_empty()) {
            let parsed = span.split_once('-').and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
            match parsed {
                Some((a, b)) if a < b && b <= frames => intervals.push((a, b)),
                _ => return Err(bad(format!("bad interval `{span}` for {frames} frames"))),
            }
        }
        out.push(TruthEntry { video_id: f[0].to_string(), frames, intervals });
    }
    Ok(out)
}

pub fn read_truth_file(path: &Path) -> Result<Vec<TruthEntry>> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
    parse_truth(path, text)
}

/// Expands every video's segment scores to its frames and concatenates them
/// with the ground-truth labels, in truth-file order. Every truth video
/// needs scores.
pub fn frame_level(scores: &[VideoScores], truth: &[TruthEntry]) -> Result<(Vec<f64>, Vec<bool>)> {
    let by_id: BTreeMap<&str, &VideoScores> = scores.iter().map(|s| (s.video_id.as_str(), s)).collect();
    let (mut s, mut l) = (Vec::new(), Vec::new());
    for t in truth {
        let v = by_id
            .get(t.video_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("no scores for video `{}`", t.video_id)))?;
        s.extend(expand_scores(&v.segments, t.frames)?.into_iter().map(f64::from));
        l.extend(t.mask());
    }
    Ok((s, l))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_round_trip_exactly() {
        let v = vec![VideoScores { video_id: "a".into(), segments: vec![0.1, 1.0 / 3.0, 5e-9, 1.0] }];
        assert_eq!(parse_scores(Path::new("s"), &format_scores(&v)).unwrap(), v);
    }

    #[test]
    fn truth_parses_and_rejects_bad_spans() {
        let t = parse_truth(Path::new("t"), "a\t10\t2-4,7-10\nb\t5\t\n").unwrap();
        assert_eq!(t[0].mask(), [false, false, true, true, false, false, false, true, true, true]);
        assert!(t[1].intervals.is_empty());
        assert!(parse_truth(Path::new("t"), "a\t10\t4-2\n").is_err());
        assert!(parse_truth(Path::new("t"), "a\t10\t8-11\n").is_err());
    }

    #[test]
    fn frame_level_requires_every_video() {
        let t = parse_truth(Path::new("t"), "a\t4\t0-2\nb\t4\t\n").unwrap();
        let s = vec![VideoScores { video_id: "a".into(), segments: vec![0.9, 0.1] }];
        assert!(frame_level(&s, &t).is_err());
        let (sc, lb) = frame_level(&s, &t[..1]).unwrap();
        assert_eq!(sc, [0.9f32 as f64, 0.9f32 as f64, 0.1f32 as f64, 0.1f32 as f64]);
        assert_eq!(lb, [true, true, false, false]);
    }
}
