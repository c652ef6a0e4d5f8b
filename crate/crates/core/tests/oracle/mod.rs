//! Slow reference implementations used to cross-check the library.
//!
//! Everything here is written from the definitions with quadratic or
//! exponential loops and shares no code with the crate under test.

#![allow(dead_code, clippy::needless_range_loop)]

use nc_coreset::embedding_io::{Label, ScoreRow, ScoreTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (fpr, tpr) after admitting every sample scoring >= t, for each distinct
/// score t from high to low, preceded by (0, 0). Counts from scratch per t.
pub fn roc_points(rows: &[(Label, f64)]) -> Vec<(f64, f64)> {
    let pos: Vec<f64> = rows.iter().filter(|r| r.0 == Label::Fake).map(|r| r.1).collect();
    let neg: Vec<f64> = rows.iter().filter(|r| r.0 == Label::Real).map(|r| r.1).collect();
    let mut thresholds: Vec<f64> = rows.iter().map(|r| r.1).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for t in thresholds {
        let fp = neg.iter().filter(|&&s| s >= t).count() as f64;
        let tp = pos.iter().filter(|&&s| s >= t).count() as f64;
        pts.push((fp / neg.len() as f64, tp / pos.len() as f64));
    }
    pts
}

/// EER as the intersection of the ROC polyline with the line fpr + tpr = 1.
/// Midpoint thresholds between consecutive distinct scores land on the same
/// vertices, so sweeping the vertices covers them.
pub fn eer(rows: &[(Label, f64)]) -> f64 {
    let pts = roc_points(rows);
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        // fnr - fpr along the segment, parameterised by s in [0, 1]
        let f0 = (1.0 - y0) - x0;
        let f1 = (1.0 - y1) - x1;
        if f0 == 0.0 {
            return x0;
        }
        if f0 > 0.0 && f1 <= 0.0 {
            let s = f0 / (f0 - f1);
            return x0 + s * (x1 - x0);
        }
    }
    1.0
}

/// Area under the ROC curve as P(fake scores above real) + P(tie) / 2.
pub fn mann_whitney(rows: &[(Label, f64)]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for f in rows.iter().filter(|r| r.0 == Label::Fake) {
        for r in rows.iter().filter(|r| r.0 == Label::Real) {
            pairs += 1.0;
            if f.1 > r.1 {
                wins += 1.0;
            } else if f.1 == r.1 {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Precision at the rank of every positive, ranks computed by counting.
fn average_precision(rows: &[(String, Label, f64)], positive: Label) -> f64 {
    let ahead = |a: &(String, Label, f64), b: &(String, Label, f64)| {
        let (sa, sb) = if positive == Label::Fake { (a.2, b.2) } else { (-a.2, -b.2) };
        sa > sb || (sa == sb && a.0 < b.0)
    };
    let n_pos = rows.iter().filter(|r| r.1 == positive).count() as f64;
    let mut total = 0.0;
    for row in rows.iter().filter(|r| r.1 == positive) {
        let rank = rows.iter().filter(|o| ahead(o, row)).count() + 1;
        let hits = rows.iter().filter(|o| o.1 == positive && ahead(o, row)).count() + 1;
        total += hits as f64 / rank as f64;
    }
    total / n_pos
}

pub fn mean_average_precision(rows: &[(String, Label, f64)]) -> f64 {
    (average_precision(rows, Label::Real) + average_precision(rows, Label::Fake)) / 2.0
}

/// Rows with ids `s0, s1, ...` as assigned by `ScoreTable::from_pairs`.
pub fn with_ids(rows: &[(Label, f64)]) -> Vec<(String, Label, f64)> {
    rows.iter().enumerate().map(|(i, r)| (format!("s{i}"), r.0, r.1)).collect()
}

pub fn table(rows: &[(Label, f64)]) -> ScoreTable {
    ScoreTable::new(
        rows.iter()
            .enumerate()
            .map(|(i, r)| ScoreRow {
                sample_id: format!("s{i}"),
                label: r.0,
                score: r.1,
            })
            .collect(),
    )
    .unwrap()
}

/// A score table of `n` rows holding both classes. Scores sit on a coarse
/// grid half of the time; otherwise they are continuous with some values
/// copied between rows. Either way ties are common.
pub fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Label, f64)> {
    assert!(n >= 2);
    let grid = if rng.random::<bool>() { rng.random_range(3..=40) as f64 } else { 0.0 };
    let shift = rng.random::<f64>();
    let mut rows: Vec<(Label, f64)> = (0..n)
        .map(|_| {
            let fake = rng.random::<bool>();
            let centre = if fake { shift } else { 0.0 };
            let raw = rng.random::<f64>() + centre;
            let score = if grid > 0.0 { (raw * grid).round() / grid } else { raw };
            (if fake { Label::Fake } else { Label::Real }, score)
        })
        .collect();
    for _ in 0..n / 5 {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        rows[a].1 = rows[b].1;
    }
    rows[0].0 = Label::Real;
    rows[1].0 = Label::Fake;
    rows
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn partition_cost(points: &[Vec<f64>], labels: &[usize], k: usize) -> Option<f64> {
    let d = points[0].len();
    let mut cost = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            return None;
        }
        let mean: Vec<f64> = (0..d)
            .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
            .collect();
        cost += members
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>();
    }
    Some(cost)
}

/// Least within-cluster sum of squares over every partition into exactly
/// `k` non-empty clusters. The first point is pinned to cluster 0.
pub fn optimal_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    let total = k.pow((n - 1) as u32);
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut().skip(1) {
            *l = c % k;
            c /= k;
        }
        if let Some(cost) = partition_cost(points, &labels, k) {
            best = best.min(cost);
        }
    }
    best
}

/// HTK mel scale.
pub fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Weight of mel band `m` (0-based, 80 bands over 82 points spanning
/// 0..8000 Hz) at frequency `hz`, evaluated directly on the triangle.
pub fn triangle_weight(m: usize, hz: f64) -> f64 {
    let top = mel(8000.0);
    let edge = |i: usize| {
        let mm = top * i as f64 / 81.0;
        700.0 * (10f64.powf(mm / 2595.0) - 1.0)
    };
    let (lo, centre, hi) = (edge(m), edge(m + 1), edge(m + 2));
    if hz <= lo || hz >= hi {
        0.0
    } else if hz <= centre {
        (hz - lo) / (centre - lo)
    } else {
        (hi - hz) / (hi - centre)
    }
}

/// Band with the largest triangle weight at `hz`.
pub fn band_of(hz: f64) -> usize {
    (0..80)
        .max_by(|&a, &b| triangle_weight(a, hz).partial_cmp(&triangle_weight(b, hz)).unwrap())
        .unwrap()
}

/// Independent reconstruction of cluster-wise selection from a finished
/// clustering: per-cluster rule against the member mean, overlap groups by
/// graph search, then the Exclude or consensus filter. Returns kept ids.
pub fn cluster_selection_reference(
    points: &[(String, Vec<f64>)],
    assignments: &[usize],
    overlapping: &dyn Fn(usize, usize) -> bool,
    k: usize,
    keep_count: &dyn Fn(usize) -> usize,
    threshold: Option<f64>,
    exclude: bool,
) -> std::collections::BTreeSet<String> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mean = |members: &[usize]| {
        let d = points[0].1.len();
        (0..d)
            .map(|j| members.iter().map(|&i| points[i].1[j]).sum::<f64>() / members.len() as f64)
            .collect::<Vec<f64>>()
    };
    // indices sorted by (distance, id), then the first keep_count(n) of them
    let ranked = |members: &[usize], centre: &[f64]| {
        let mut v: Vec<(f64, usize)> = members.iter().map(|&i| (dist(&points[i].1, centre), i)).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(points[a.1].0.cmp(&points[b.1].0)));
        let n = match threshold {
            Some(t) => v.iter().filter(|x| x.0 <= t).count(),
            None => keep_count(v.len()),
        };
        v.truncate(n);
        v
    };

    let members: Vec<Vec<usize>> = (0..k).map(|c| (0..points.len()).filter(|&i| assignments[i] == c).collect()).collect();
    let means: Vec<Vec<f64>> = members.iter().map(|m| mean(m)).collect();
    let kept: Vec<Vec<(f64, usize)>> = (0..k).map(|c| ranked(&members[c], &means[c])).collect();
    let reach: Vec<Option<f64>> = (0..k)
        .map(|c| threshold.or_else(|| kept[c].last().map(|x| x.0)))
        .collect();

    let mut group_of = vec![usize::MAX; k];
    for start in 0..k {
        if group_of[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        group_of[start] = start;
        while let Some(c) = stack.pop() {
            for o in 0..k {
                if o != c && group_of[o] == usize::MAX && overlapping(c, o) {
                    group_of[o] = start;
                    stack.push(o);
                }
            }
        }
    }

    let mut out = std::collections::BTreeSet::new();
    for c in 0..k {
        let group: Vec<usize> = (0..k).filter(|&o| group_of[o] == group_of[c]).collect();
        let consensus: Option<std::collections::BTreeSet<usize>> = if group.len() > 1 && !exclude {
            let all: Vec<usize> = group.iter().flat_map(|&g| members[g].clone()).collect();
            Some(ranked(&all, &mean(&all)).into_iter().map(|x| x.1).collect())
        } else {
            None
        };
        for &(_, i) in &kept[c] {
            let ok = if group.len() == 1 {
                true
            } else if exclude {
                group
                    .iter()
                    .filter(|&&o| o != c)
                    .all(|&o| reach[o].is_none_or(|r| dist(&points[i].1, &means[o]) > r))
            } else {
                consensus.as_ref().unwrap().contains(&i)
            };
            if ok {
                out.insert(points[i].0.clone());
            }
        }
    }
    out
}
