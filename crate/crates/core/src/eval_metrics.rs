//! Detection metrics: ROC curve with grouped ties, EER read off the ROC
//! polyline, and two-class mean average precision.

use serde::Serialize;

use crate::embedding_io::{Label, ScoreTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Samples scoring at or above this value are called positive.
    /// `+inf` for the (0, 0) endpoint.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub eer_roc: f64,
    pub map: f64,
    pub auc: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

/// Scores oriented so that larger means "more positive".
fn oriented(scores: &ScoreTable, positive: Label) -> Result<Vec<(f64, bool)>> {
    let pos = scores.count(positive);
    if pos == 0 || pos == scores.len() {
        return Err(Error::SingleClassOnly);
    }
    Ok(scores
        .rows()
        .iter()
        .map(|r| {
            let s = if positive == Label::Fake { r.score } else { -r.score };
            (s, r.label == positive)
        })
        .collect())
}

/// ROC curve sweeping every distinct score from high to low; equal scores
/// enter together.
pub fn roc_curve(scores: &ScoreTable, positive: Label) -> Result<RocCurve> {
    let mut data = oriented(scores, positive)?;
    data.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_pos = data.iter().filter(|d| d.1).count() as f64;
    let n_neg = data.len() as f64 - n_pos;

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < data.len() {
        let value = data[i].0;
        while i < data.len() && data[i].0 == value {
            if data[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let threshold = if positive == Label::Fake { value } else { -value };
        points.push(RocPoint {
            fpr: fp as f64 / n_neg,
            tpr: tp as f64 / n_pos,
            threshold,
        });
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * 0.5)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Equal error rate: the point on the ROC polyline where FPR = 1 - TPR,
/// linearly interpolated inside the segment where FPR - FNR changes sign.
pub fn eer_from_curve(curve: &RocCurve) -> f64 {
    let gap = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    for w in curve.points.windows(2) {
        let (g0, g1) = (gap(&w[0]), gap(&w[1]));
        if g0 == 0.0 {
            return w[0].fpr;
        }
        if g0 < 0.0 && g1 >= 0.0 {
            let t = -g0 / (g1 - g0);
            return w[0].fpr + t * (w[1].fpr - w[0].fpr);
        }
    }
    // the curve ends at (1, 1) where the gap is +1, so this is unreachable
    // for a well-formed curve
    curve.points.last().map_or(1.0, |p| p.fpr)
}

pub fn eer_roc(scores: &ScoreTable) -> Result<f64> {
    Ok(eer_from_curve(&roc_curve(scores, Label::Fake)?))
}

fn average_precision(scores: &ScoreTable, positive: Label) -> Result<f64> {
    if scores.count(positive) == 0 {
        return Err(Error::SingleClassOnly);
    }
    let mut ranked: Vec<_> = scores.rows().iter().collect();
    ranked.sort_by(|a, b| {
        let by_score = match positive {
            Label::Fake => b.score.total_cmp(&a.score),
            Label::Real => a.score.total_cmp(&b.score),
        };
        by_score.then_with(|| a.sample_id.cmp(&b.sample_id))
    });
    let n_pos = scores.count(positive) as f64;
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, row) in ranked.iter().enumerate() {
        if row.label == positive {
            hits += 1;
            ap += (hits as f64 / (rank + 1) as f64) / n_pos;
        }
    }
    Ok(ap)
}

/// Mean of the per-class average precisions. Real samples are ranked by
/// ascending score, fakes by descending score; ties by sample id.
pub fn mean_average_precision(scores: &ScoreTable) -> Result<f64> {
    if scores.count(Label::Real) == 0 || scores.count(Label::Fake) == 0 {
        return Err(Error::SingleClassOnly);
    }
    Ok((average_precision(scores, Label::Real)? + average_precision(scores, Label::Fake)?) / 2.0)
}

pub fn evaluate(scores: &ScoreTable) -> Result<Metrics> {
    let curve = roc_curve(scores, Label::Fake)?;
    Ok(Metrics {
        eer_roc: eer_from_curve(&curve),
        map: mean_average_precision(scores)?,
        auc: curve.auc,
        n_real: scores.count(Label::Real),
        n_fake: scores.count(Label::Fake),
    })
}
