use crate::error::{Error, Result};

/// Threshold-sweep ROC curve and the trapezoidal area under it.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, non-decreasing in both.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Area under a piecewise-linear curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5).sum()
}

/// Frame-level ROC over all scores with binary labels.
///
/// One threshold per distinct score, highest first; equal scores move
/// together, so a tie between a positive and a negative contributes a
/// diagonal segment and the area counts it as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::shape("roc_auc", &[scores.len()], &[labels.len()]));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidInput(format!("roc_auc: score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput(format!(
            "roc_auc needs both classes, got {pos} positive and {neg} negative frames"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// Frame score assignment: frame `j` of `frame_count` takes the score of
/// segment `floor(j * m / frame_count)`.
pub fn expand_scores(segment_scores: &[f32], frame_count: usize) -> Result<Vec<f32>> {
    let m = segment_scores.len();
    if m == 0 {
        return Err(Error::InvalidInput("expand_scores: no segment scores".into()));
    }
    Ok((0..frame_count).map(|j| segment_scores[j * m / frame_count]).collect())
}
