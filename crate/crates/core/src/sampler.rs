//! Coreset selection by distance to class means (single-mode classes), by
//! distance to per-cluster means (multi-mode fake class), and the uniform
//! random baseline.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collapse::{class_mean, distance_scores, euclidean, sort_scores, to_f64, DistanceScore};
use crate::embedding_io::{EmbeddingTable, Label, ManifestRow, SelectionManifest, SelectionRule};
use crate::error::{Error, Result};
use crate::kmeans::{select_k, KSelection, DEFAULT_RESTARTS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingRule {
    /// Keep every sample with distance <= t.
    Threshold(f64),
    /// Keep the ceil(p * n) nearest samples.
    TopFraction(f64),
    /// Keep the m nearest samples.
    TopCount(usize),
}

impl SamplingRule {
    pub fn validate(self) -> Result<Self> {
        let ok = match self {
            SamplingRule::Threshold(t) => t >= 0.0 && !t.is_nan(),
            SamplingRule::TopFraction(p) => p > 0.0 && p <= 1.0,
            SamplingRule::TopCount(m) => m >= 1,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(format!("invalid sampling rule {self:?}")))
        }
    }

    fn tag(self) -> SelectionRule {
        match self {
            SamplingRule::Threshold(_) => SelectionRule::Threshold,
            SamplingRule::TopFraction(_) => SelectionRule::TopFraction,
            SamplingRule::TopCount(_) => SelectionRule::TopCount,
        }
    }

    fn cluster_tag(self) -> SelectionRule {
        match self {
            SamplingRule::Threshold(_) => SelectionRule::ClusterThreshold,
            SamplingRule::TopFraction(_) => SelectionRule::ClusterTopFraction,
            SamplingRule::TopCount(_) => SelectionRule::ClusterTopCount,
        }
    }

    /// Number of leading entries of an ascending distance list the rule
    /// keeps. With `clamp`, a count larger than the list keeps everything.
    fn cutoff(self, sorted: &[DistanceScore], clamp: bool) -> Result<usize> {
        let n = sorted.len();
        Ok(match self {
            SamplingRule::Threshold(t) => sorted.partition_point(|s| s.distance <= t),
            SamplingRule::TopFraction(p) => ((p * n as f64).ceil() as usize).min(n),
            SamplingRule::TopCount(m) if m <= n => m,
            SamplingRule::TopCount(m) if clamp => m.min(n),
            SamplingRule::TopCount(m) => {
                return Err(Error::CountExceedsClass {
                    requested: m,
                    available: n,
                })
            }
        })
    }
}

/// How members of mutually overlapping fake clusters are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapMode {
    /// Drop points that also pass the rule of another cluster in the group.
    #[default]
    Exclude,
    /// Keep points passing the rule for their own cluster and for the
    /// merged group.
    MergedConsensus,
}

/// Distance-to-class-mean selection for one class.
pub fn select_class(table: &EmbeddingTable, label: Label, rule: SamplingRule) -> Result<SelectionManifest> {
    let rule = rule.validate()?;
    let mean = class_mean(table, label)?;
    let scores = distance_scores(table, &mean, label)?;
    let keep = rule.cutoff(&scores, false)?;
    SelectionManifest::new(
        scores[..keep]
            .iter()
            .map(|s| ManifestRow {
                sample_id: s.sample_id.clone(),
                label,
                cluster_id: -1,
                distance: s.distance,
                rule: rule.tag(),
            })
            .collect(),
    )
}

/// Uniform sampling without replacement of `n_per_class` records per class.
pub fn select_random(table: &EmbeddingTable, n_per_class: usize, seed: u64) -> Result<SelectionManifest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(2 * n_per_class);
    for label in Label::ALL {
        let members: Vec<&str> = table.class(label).map(|r| r.sample_id.as_str()).collect();
        if n_per_class > members.len() {
            return Err(Error::CountExceedsClass {
                requested: n_per_class,
                available: members.len(),
            });
        }
        let mut picked = rand::seq::index::sample(&mut rng, members.len(), n_per_class).into_vec();
        picked.sort_unstable();
        rows.extend(picked.into_iter().map(|i| ManifestRow {
            sample_id: members[i].to_string(),
            label,
            cluster_id: -1,
            distance: 0.0,
            rule: SelectionRule::Random,
        }));
    }
    SelectionManifest::new(rows)
}

struct ClusterView {
    /// Distances of members to the cluster mean, ascending.
    scores: Vec<DistanceScore>,
    mean: Vec<f64>,
    keep: usize,
    /// Largest distance at which the cluster's rule still accepts a point.
    reach: Option<f64>,
}

fn mean_of(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let mut sum = vec![0.0; points[members[0]].len()];
    for &i in members {
        for (s, v) in sum.iter_mut().zip(&points[i]) {
            *s += v;
        }
    }
    sum.iter_mut().for_each(|s| *s /= members.len() as f64);
    sum
}

fn scored(points: &[Vec<f64>], ids: &[&str], members: &[usize], center: &[f64]) -> Vec<DistanceScore> {
    let mut scores: Vec<DistanceScore> = members
        .iter()
        .map(|&i| DistanceScore {
            sample_id: ids[i].to_string(),
            index: i,
            distance: euclidean(&points[i], center),
        })
        .collect();
    sort_scores(&mut scores);
    scores
}

/// Cluster-wise selection for the fake class. See [`sample_fake_class_detailed`].
pub fn sample_fake_class(
    table: &EmbeddingTable,
    rule: SamplingRule,
    k_max: usize,
    seed: u64,
    overlap_mode: OverlapMode,
) -> Result<SelectionManifest> {
    sample_fake_class_detailed(table, rule, k_max, seed, overlap_mode).map(|(m, _)| m)
}

/// Clusters the fake embeddings (cluster count chosen by [`select_k`]) and
/// applies `rule` inside every cluster against the cluster mean.
///
/// Clusters joined by overlap form groups. In a group, `Exclude` keeps a
/// point only if no other cluster of the group would also accept it, where
/// a cluster accepts points within its threshold (or, for count/fraction
/// rules, within its farthest kept distance). `MergedConsensus` keeps a
/// point only if it also passes the rule against the mean of the whole
/// group. A single selected cluster reduces to [`select_class`].
///
/// Per-cluster `TopCount` keeps at most the cluster size.
pub fn sample_fake_class_detailed(
    table: &EmbeddingTable,
    rule: SamplingRule,
    k_max: usize,
    seed: u64,
    overlap_mode: OverlapMode,
) -> Result<(SelectionManifest, KSelection)> {
    let rule = rule.validate()?;
    let fakes: Vec<_> = table.class(Label::Fake).collect();
    if fakes.is_empty() {
        return Err(Error::EmptyClass(Label::Fake));
    }
    let points: Vec<Vec<f64>> = fakes.iter().map(|r| to_f64(&r.embedding)).collect();
    let ids: Vec<&str> = fakes.iter().map(|r| r.sample_id.as_str()).collect();

    let selection = select_k(&points, k_max, seed, DEFAULT_RESTARTS)?;
    if selection.clustering.k == 1 {
        return Ok((select_class(table, Label::Fake, rule)?, selection));
    }

    let clustering = &selection.clustering;
    let mut views = Vec::with_capacity(clustering.k);
    for c in 0..clustering.k {
        let members = clustering.members(c);
        let mean = mean_of(&points, &members);
        let scores = scored(&points, &ids, &members, &mean);
        let keep = rule.cutoff(&scores, true)?;
        let reach = match rule {
            SamplingRule::Threshold(t) => Some(t),
            _ => keep.checked_sub(1).map(|last| scores[last].distance),
        };
        views.push(ClusterView {
            scores,
            mean,
            keep,
            reach,
        });
    }

    let tag = rule.cluster_tag();
    let mut rows: Vec<ManifestRow> = Vec::new();
    for group in selection.overlap.groups() {
        let consensus = if group.len() > 1 && overlap_mode == OverlapMode::MergedConsensus {
            let all: Vec<usize> = group.iter().flat_map(|&c| clustering.members(c)).collect();
            let merged = scored(&points, &ids, &all, &mean_of(&points, &all));
            let keep = rule.cutoff(&merged, true)?;
            Some(merged[..keep].iter().map(|s| s.index).collect::<std::collections::HashSet<_>>())
        } else {
            None
        };

        for &c in &group {
            let view = &views[c];
            for s in &view.scores[..view.keep] {
                let accepted = if group.len() == 1 {
                    true
                } else {
                    match overlap_mode {
                        OverlapMode::Exclude => group.iter().filter(|&&o| o != c).all(|&o| {
                            views[o]
                                .reach
                                .is_none_or(|reach| euclidean(&points[s.index], &views[o].mean) > reach)
                        }),
                        OverlapMode::MergedConsensus => {
                            consensus.as_ref().is_some_and(|set| set.contains(&s.index))
                        }
                    }
                };
                if accepted {
                    rows.push(ManifestRow {
                        sample_id: s.sample_id.clone(),
                        label: Label::Fake,
                        cluster_id: c as i64,
                        distance: s.distance,
                        rule: tag,
                    });
                }
            }
        }
    }

    Ok((SelectionManifest::new(dedup_by_id(rows))?, selection))
}

/// Keeps one row per sample id, the one with the smaller distance.
fn dedup_by_id(rows: Vec<ManifestRow>) -> Vec<ManifestRow> {
    let mut best: HashMap<String, ManifestRow> = HashMap::with_capacity(rows.len());
    for row in rows {
        match best.get(&row.sample_id) {
            Some(existing) if existing.distance <= row.distance => {}
            _ => {
                best.insert(row.sample_id.clone(), row);
            }
        }
    }
    best.into_values().collect()
}

/// Disjoint union of two manifests.
pub fn merge_manifests(real: &SelectionManifest, fake: &SelectionManifest) -> Result<SelectionManifest> {
    SelectionManifest::new(real.rows().iter().chain(fake.rows()).cloned().collect())
}

/// The records of `table` listed in `manifest`, in table order.
pub fn training_subset(table: &EmbeddingTable, manifest: &SelectionManifest) -> EmbeddingTable {
    table.select_ids(manifest.ids())
}
