//! Deterministic Lloyd's k-means with k-means++ seeding, the percentile-radius
//! overlap report, and the overlap-minimizing search over the cluster count.
//!
//! PRNG contract: every run draws from `ChaCha8Rng::seed_from_u64(seed)`.
//! The first center is `points[floor(u * n)]` for one uniform `u` in [0, 1);
//! each further center is picked by one uniform draw against the cumulative
//! D² weights (record order). Restart `r` of a best-of search uses
//! `seed + r * 0x9E37_79B9_7F4A_7C15` (wrapping).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::collapse::squared_distance;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_RESTARTS: usize = 8;
/// Percentile of member-to-center distances used as a cluster radius.
pub const RADIUS_PERCENTILE: f64 = 0.9;

const RESTART_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub k: usize,
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances of points to their assigned centers.
    pub inertia: f64,
    pub radii: Vec<f64>,
    pub iterations_run: usize,
    /// True when the last Lloyd step left the assignment unchanged.
    pub converged: bool,
    /// Cost after every assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
}

impl Clustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Point indices of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == c)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn restart_seed(seed: u64, restart: usize) -> u64 {
    seed.wrapping_add((restart as u64).wrapping_mul(RESTART_STRIDE))
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<usize> {
    let first = points.first().ok_or(Error::EmptyInput)?;
    let dim = first.len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::KTooLarge { k, points: points.len() });
    }
    Ok(dim)
}

fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();

    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final sum
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1))
        } else {
            ((rng.random::<f64>() * n as f64) as usize).min(n - 1)
        };
        let center = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &center));
        }
        centers.push(center);
    }
    centers
}

/// Nearest center per point, lowest index on ties; returns the cost too.
fn assign(points: &[Vec<f64>], centers: &[Vec<f64>], out: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut cost = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = squared_distance(p, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        out[i] = best;
        dist[i] = best_d;
        cost += best_d;
    }
    cost
}

/// Gives every empty cluster the point farthest from its own center, taken
/// from a cluster that keeps at least one member.
fn repair_empty(
    points: &[Vec<f64>],
    centers: &mut [Vec<f64>],
    assignments: &mut [usize],
    dist: &mut [f64],
) -> f64 {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far = None;
        for (i, &d) in dist.iter().enumerate() {
            if sizes[assignments[i]] > 1 && far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { break };
        sizes[assignments[i]] -= 1;
        sizes[c] = 1;
        assignments[i] = c;
        dist[i] = 0.0;
        centers[c] = points[i].clone();
    }
    dist.iter().sum()
}

fn update_centers(points: &[Vec<f64>], assignments: &[usize], centers: &mut [Vec<f64>]) -> f64 {
    let dim = centers[0].len();
    let mut sums = vec![vec![0.0; dim]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (p, &a) in points.iter().zip(assignments) {
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
        counts[a] += 1;
    }
    let mut shift: f64 = 0.0;
    for ((center, sum), &count) in centers.iter_mut().zip(sums).zip(&counts) {
        if count == 0 {
            continue;
        }
        let new: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();
        shift = shift.max(squared_distance(center, &new).sqrt());
        *center = new;
    }
    shift
}

/// 90th-percentile (nearest-rank) member distance per cluster; 0 for empty.
pub fn percentile_radii(points: &[Vec<f64>], centers: &[Vec<f64>], assignments: &[usize]) -> Vec<f64> {
    let mut per_cluster: Vec<Vec<f64>> = vec![Vec::new(); centers.len()];
    for (p, &a) in points.iter().zip(assignments) {
        per_cluster[a].push(squared_distance(p, &centers[a]).sqrt());
    }
    per_cluster
        .into_iter()
        .map(|mut d| {
            if d.is_empty() {
                return 0.0;
            }
            d.sort_by(f64::total_cmp);
            let rank = ((RADIUS_PERCENTILE * d.len() as f64).ceil() as usize).clamp(1, d.len());
            d[rank - 1]
        })
        .collect()
}

/// Lloyd's algorithm from a k-means++ start.
///
/// Stops when the assignment no longer changes, when the largest center
/// movement drops below `tol`, or after `max_iter` update steps.
///
/// Points are processed in lexicographic order internally, so reordering
/// the input only reorders `assignments`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Clustering> {
    validate(points, k)?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| lexicographic(&points[a], &points[b]));
    let sorted: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
    let mut clustering = lloyd(&sorted, k, seed, max_iter, tol);
    let mut assignments = vec![0; points.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = clustering.assignments[pos];
    }
    clustering.assignments = assignments;
    Ok(clustering)
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, tol: f64) -> Clustering {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(points, k, &mut rng);

    let mut assignments = vec![0usize; n];
    let mut dist = vec![0.0; n];
    assign(points, &centers, &mut assignments, &mut dist);
    let mut history = vec![repair_empty(points, &mut centers, &mut assignments, &mut dist)];

    let mut iterations_run = 0;
    let mut converged = false;
    let mut next = vec![0usize; n];
    while iterations_run < max_iter {
        let shift = update_centers(points, &assignments, &mut centers);
        iterations_run += 1;
        assign(points, &centers, &mut next, &mut dist);
        let cost = repair_empty(points, &mut centers, &mut next, &mut dist);
        history.push(cost);
        let changed = next != assignments;
        std::mem::swap(&mut assignments, &mut next);
        if !changed {
            converged = true;
            break;
        }
        if shift < tol {
            break;
        }
    }

    let inertia = dist.iter().sum();
    let radii = percentile_radii(points, &centers, &assignments);
    Clustering {
        k,
        centers,
        assignments,
        inertia,
        radii,
        iterations_run,
        converged,
        inertia_history: history,
    }
}

/// Lowest-inertia clustering over `restarts` derived seeds (first wins ties).
pub fn kmeans_best_of(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    let mut best: Option<Clustering> = None;
    for r in 0..restarts.max(1) {
        let c = kmeans(points, k, restart_seed(seed, r), DEFAULT_MAX_ITER, DEFAULT_TOL)?;
        if best.as_ref().is_none_or(|b| c.inertia < b.inertia) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOverlap {
    pub a: usize,
    pub b: usize,
    /// ||center_a - center_b|| - (radius_a + radius_b)
    pub margin: f64,
    pub overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub k: usize,
    /// One entry per unordered pair a < b.
    pub pairs: Vec<PairOverlap>,
    /// Fraction of pairs that overlap; 0 when there are no pairs.
    pub overlap_score: f64,
}

impl OverlapReport {
    fn pair(&self, a: usize, b: usize) -> Option<&PairOverlap> {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if a == b || b >= self.k {
            return None;
        }
        // pairs are laid out row by row
        let index = a * self.k - a * (a + 1) / 2 + (b - a - 1);
        self.pairs.get(index)
    }

    pub fn margin(&self, a: usize, b: usize) -> Option<f64> {
        self.pair(a, b).map(|p| p.margin)
    }

    pub fn overlaps(&self, a: usize, b: usize) -> bool {
        self.pair(a, b).is_some_and(|p| p.overlap)
    }

    /// Connected components of the overlap graph, each sorted ascending and
    /// ordered by their smallest cluster index.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut component: Vec<usize> = (0..self.k).collect();
        fn root(component: &mut [usize], mut i: usize) -> usize {
            while component[i] != i {
                component[i] = component[component[i]];
                i = component[i];
            }
            i
        }
        for p in self.pairs.iter().filter(|p| p.overlap) {
            let (ra, rb) = (root(&mut component, p.a), root(&mut component, p.b));
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            component[hi] = lo;
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; self.k];
        for c in 0..self.k {
            let r = root(&mut component, c);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(c);
        }
        groups
    }

    fn single(k: usize) -> OverlapReport {
        OverlapReport {
            k,
            pairs: Vec::new(),
            overlap_score: 0.0,
        }
    }
}

pub fn overlap_report(c: &Clustering) -> Result<OverlapReport> {
    if c.k < 2 {
        return Err(Error::SingleCluster);
    }
    if let Some(empty) = c.cluster_sizes().iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }
    let mut pairs = Vec::with_capacity(c.k * (c.k - 1) / 2);
    for a in 0..c.k {
        for b in a + 1..c.k {
            let margin = squared_distance(&c.centers[a], &c.centers[b]).sqrt() - (c.radii[a] + c.radii[b]);
            pairs.push(PairOverlap {
                a,
                b,
                margin,
                overlap: margin < 0.0,
            });
        }
    }
    let overlapping = pairs.iter().filter(|p| p.overlap).count();
    let overlap_score = overlapping as f64 / pairs.len() as f64;
    Ok(OverlapReport {
        k: c.k,
        pairs,
        overlap_score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KCandidate {
    pub k: usize,
    pub inertia: f64,
    /// `None` when the clustering was not admissible (coincident centers).
    pub overlap_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub clustering: Clustering,
    pub overlap: OverlapReport,
    pub candidates: Vec<KCandidate>,
}

fn has_coincident_centers(c: &Clustering) -> bool {
    (0..c.k).any(|a| (a + 1..c.k).any(|b| squared_distance(&c.centers[a], &c.centers[b]) == 0.0))
}

/// Searches k in 2..=k_max for the clustering with the least overlap.
///
/// Each k keeps its best-of-`restarts` run. Ties on overlap go to the larger
/// k, then the lower inertia. A k whose best run has coincident centers is
/// skipped; if every k is skipped (or `k_max == 1`) the single-cluster
/// solution is returned with an empty report. `k_max` is capped at the
/// number of points.
pub fn select_k(points: &[Vec<f64>], k_max: usize, seed: u64, restarts: usize) -> Result<KSelection> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be at least 1".into()));
    }
    validate(points, 1)?;
    let k_max = k_max.min(points.len());

    let mut candidates = Vec::new();
    let mut best: Option<(Clustering, OverlapReport)> = None;
    for k in 2..=k_max {
        let clustering = kmeans_best_of(points, k, seed, restarts)?;
        if has_coincident_centers(&clustering) {
            candidates.push(KCandidate {
                k,
                inertia: clustering.inertia,
                overlap_score: None,
            });
            continue;
        }
        let report = overlap_report(&clustering)?;
        candidates.push(KCandidate {
            k,
            inertia: clustering.inertia,
            overlap_score: Some(report.overlap_score),
        });
        let better = match &best {
            None => true,
            Some((bc, br)) => {
                report.overlap_score < br.overlap_score
                    || (report.overlap_score == br.overlap_score
                        && (k > bc.k || (k == bc.k && clustering.inertia < bc.inertia)))
            }
        };
        if better {
            best = Some((clustering, report));
        }
    }

    let (clustering, overlap) = match best {
        Some(found) => found,
        None => {
            let single = kmeans_best_of(points, 1, seed, restarts)?;
            candidates.insert(
                0,
                KCandidate {
                    k: 1,
                    inertia: single.inertia,
                    overlap_score: Some(0.0),
                },
            );
            (single, OverlapReport::single(1))
        }
    };
    Ok(KSelection {
        clustering,
        overlap,
        candidates,
    })
}
