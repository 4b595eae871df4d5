//! ROC text, AUC summaries and SVG plots.
//!
//! ROC text is `fpr,tpr` followed by one point per line. Values are written
//! in the shortest decimal form that parses back to the same `f64`, so a
//! curve survives a write/read cycle bit for bit.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::roc::{trapezoid, RocCurve};
use crate::binio::write_atomic;
use crate::error::{Error, Result};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct NamedCurve {
    pub name: String,
    pub curve: RocCurve,
}

pub fn format_roc_text(curve: &RocCurve) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (f, t) in &curve.points {
        let _ = writeln!(s, "{f},{t}");
    }
    s
}

pub fn parse_roc_text(path: &Path, text: &str) -> Result<RocCurve> {
    let mut lines = text.lines();
    if lines.next() != Some("fpr,tpr") {
        return Err(Error::format(path, "missing `fpr,tpr` header"));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let p = line.split_once(',').and_then(|(a, b)| Some((a.parse::<f64>().ok()?, b.parse::<f64>().ok()?)));
        points.push(p.ok_or_else(|| Error::format(path, format!("line {}: expected `fpr,tpr`", i + 2)))?);
    }
    if points.len() < 2 {
        return Err(Error::format(path, "an ROC curve needs at least two points"));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// `name<TAB>auc` per curve.
pub fn format_summary(results: &[NamedCurve]) -> String {
    let mut s = String::new();
    for r in results {
        let _ = writeln!(s, "{}\t{}", r.name, r.curve.auc);
    }
    s
}

/// Standalone SVG with one polyline per curve, the chance diagonal and a
/// legend carrying each AUC.
pub fn render_svg(results: &[NamedCurve]) -> String {
    let (x0, y0, side) = (60.0, 20.0, 360.0);
    let px = |f: f64| x0 + f * side;
    let py = |t: f64| y0 + (1.0 - t) * side;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="440" viewBox="0 0 640 440">"#);
    let _ = writeln!(s, r#"<rect width="640" height="440" fill="white"/>"#);
    let _ = writeln!(s, r##"<rect x="{x0}" y="{y0}" width="{side}" height="{side}" fill="none" stroke="#333"/>"##);
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#aaa" stroke-dasharray="4 4"/>"##,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{v}</text>"#, px(v), py(0.0) + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v}</text>"#, x0 - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">false positive rate</text>"#, px(0.5), py(0.0) + 34.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">true positive rate</text>"#,
        py(0.5),
        py(0.5)
    );
    for (i, r) in results.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = r.curve.points.iter().map(|&(f, t)| format!("{:.2},{:.2}", px(f), py(t))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = y0 + 16.0 + 20.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="440" y1="{ly:.1}" x2="466" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="472" y="{:.1}" font-size="12">{} (AUC {:.4})</text>"#,
            ly + 4.0,
            escape(&r.name),
            r.curve.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Paths written by [`emit_report`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub roc: Vec<PathBuf>,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

/// Writes `roc_<name>.csv` per curve, `summary.tsv` and `roc.svg` under
/// `dir`. Everything is rendered and checked before the first write; each
/// file is replaced atomically.
pub fn emit_report(results: &[NamedCurve], dir: &Path) -> Result<ReportFiles> {
    if results.is_empty() {
        return Err(Error::InvalidInput("emit_report: no results".into()));
    }
    for (i, r) in results.iter().enumerate() {
        let ok = !r.name.is_empty() && r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !ok {
            return Err(Error::InvalidInput(format!("report name `{}` must be non-empty [A-Za-z0-9_-]", r.name)));
        }
        if results[..i].iter().any(|o| o.name == r.name) {
            return Err(Error::InvalidInput(format!("duplicate report name `{}`", r.name)));
        }
    }
    let mut files: Vec<(PathBuf, String)> =
        results.iter().map(|r| (dir.join(format!("roc_{}.csv", r.name)), format_roc_text(&r.curve))).collect();
    let summary = dir.join("summary.tsv");
    let plot = dir.join("roc.svg");
    files.push((summary.clone(), format_summary(results)));
    files.push((plot.clone(), render_svg(results)));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (path, text) in &files {
        write_atomic(path, text.as_bytes())?;
    }
    let roc = files[..results.len()].iter().map(|(p, _)| p.clone()).collect();
    Ok(ReportFiles { roc, summary, plot })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::roc_auc;

    fn curve() -> RocCurve {
        roc_auc(&[0.9, 0.8, 0.3, 0.1, 1.0 / 3.0], &[true, false, true, false, true]).unwrap()
    }

    #[test]
    fn roc_text_round_trips() {
        let c = curve();
        assert_eq!(parse_roc_text(Path::new("r"), &format_roc_text(&c)).unwrap(), c);
        assert!(parse_roc_text(Path::new("r"), "0,0\n1,1\n").is_err());
    }

    #[test]
    fn two_curves_two_polylines_and_a_legend() {
        let results = vec![
            NamedCurve { name: "max".into(), curve: curve() },
            NamedCurve { name: "attention".into(), curve: curve() },
        ];
        let svg = render_svg(&results);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("max (AUC") && svg.contains("attention (AUC"));
    }

    #[test]
    fn empty_results_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report");
        assert!(emit_report(&[], &out).is_err());
        assert!(!out.exists());
        let bad = vec![NamedCurve { name: "a/b".into(), curve: curve() }];
        assert!(emit_report(&bad, &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn report_bytes_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let results = vec![NamedCurve { name: "attention".into(), curve: curve() }];
        let a = emit_report(&results, &dir.path().join("a")).unwrap();
        let b = emit_report(&results, &dir.path().join("b")).unwrap();
        for (x, y) in [(&a.summary, &b.summary), (&a.plot, &b.plot), (&a.roc[0], &b.roc[0])] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }
}
