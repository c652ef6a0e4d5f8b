//! Class geometry of penultimate embeddings: class means, trace scatter
//! statistics (NC1), distance-to-mean scores, nearest-class-mean assignment
//! and the correctly-classified ("samples of interest") filter.
//!
//! All accumulation is in `f64`, summed sequentially in record order.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::embedding_io::{EmbeddingTable, Label, ScoreTable};
use crate::error::{Error, Result};

/// Score at or above which a sample is predicted fake.
pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassGeometry {
    pub mu_real: Vec<f64>,
    pub mu_fake: Vec<f64>,
    pub n_real: usize,
    pub n_fake: usize,
    pub global_mean: Vec<f64>,
    /// Tr Σ_W = (1/N) Σ_k Σ_i ||f_ki - μ_k||²
    pub tr_sw: f64,
    /// Tr Σ_B = Σ_k (n_k/N) ||μ_k - μ_G||²
    pub tr_sb: f64,
    /// Tr Σ_W / Tr Σ_B
    pub nc1: f64,
}

impl ClassGeometry {
    pub fn mean(&self, label: Label) -> &[f64] {
        match label {
            Label::Real => &self.mu_real,
            Label::Fake => &self.mu_fake,
        }
    }

    pub fn count(&self, label: Label) -> usize {
        match label {
            Label::Real => self.n_real,
            Label::Fake => self.n_fake,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceScore {
    pub sample_id: String,
    /// Index of the record in the source table.
    pub index: usize,
    pub distance: f64,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

fn squared_distance_f32(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, y)| {
            let d = x as f64 - y;
            d * d
        })
        .sum()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Mean embedding of class `label`.
pub fn class_mean(table: &EmbeddingTable, label: Label) -> Result<Vec<f64>> {
    let mut sum = vec![0.0f64; table.dimension()];
    let mut n = 0usize;
    for record in table.class(label) {
        for (s, &v) in sum.iter_mut().zip(&record.embedding) {
            *s += v as f64;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyClass(label));
    }
    let inv = n as f64;
    sum.iter_mut().for_each(|s| *s /= inv);
    Ok(sum)
}

pub fn geometry(table: &EmbeddingTable) -> Result<ClassGeometry> {
    let mu_real = class_mean(table, Label::Real)?;
    let mu_fake = class_mean(table, Label::Fake)?;
    let n_real = table.count(Label::Real);
    let n_fake = table.count(Label::Fake);
    let total = (n_real + n_fake) as f64;

    let global_mean: Vec<f64> = mu_real
        .iter()
        .zip(&mu_fake)
        .map(|(r, f)| (n_real as f64 * r + n_fake as f64 * f) / total)
        .collect();

    let mut within = 0.0;
    for record in table.records() {
        let mu = match record.label {
            Label::Real => &mu_real,
            Label::Fake => &mu_fake,
        };
        within += squared_distance_f32(&record.embedding, mu);
    }
    let tr_sw = within / total;
    let tr_sb = (n_real as f64 / total) * squared_distance(&mu_real, &global_mean)
        + (n_fake as f64 / total) * squared_distance(&mu_fake, &global_mean);

    if mu_real == mu_fake || tr_sb == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(ClassGeometry {
        nc1: tr_sw / tr_sb,
        mu_real,
        mu_fake,
        n_real,
        n_fake,
        global_mean,
        tr_sw,
        tr_sb,
    })
}

/// Distances of every class-`label` record to `mean`, sorted ascending by
/// distance, ties by sample id.
pub fn distance_scores(table: &EmbeddingTable, mean: &[f64], label: Label) -> Result<Vec<DistanceScore>> {
    if mean.len() != table.dimension() {
        return Err(Error::DimensionMismatch {
            expected: table.dimension(),
            found: mean.len(),
        });
    }
    let mut scores: Vec<DistanceScore> = table
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label == label)
        .map(|(index, r)| DistanceScore {
            sample_id: r.sample_id.clone(),
            index,
            distance: squared_distance_f32(&r.embedding, mean).sqrt(),
        })
        .collect();
    sort_scores(&mut scores);
    Ok(scores)
}

pub(crate) fn sort_scores(scores: &mut [DistanceScore]) {
    scores.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });
}

/// Nearest-class-mean decision; exact ties go to `Real`.
pub fn ncc_assign(feature: &[f64], geometry: &ClassGeometry) -> Result<Label> {
    if feature.len() != geometry.mu_real.len() {
        return Err(Error::DimensionMismatch {
            expected: geometry.mu_real.len(),
            found: feature.len(),
        });
    }
    let d_real = squared_distance(feature, &geometry.mu_real);
    let d_fake = squared_distance(feature, &geometry.mu_fake);
    Ok(if d_real <= d_fake { Label::Real } else { Label::Fake })
}

/// Records whose predicted label (`score >= threshold` means fake) matches
/// the ground truth. Order is preserved.
pub fn samples_of_interest(table: &EmbeddingTable, scores: &ScoreTable, threshold: f64) -> Result<EmbeddingTable> {
    let lookup = scores.score_map();
    for record in table.records() {
        if !lookup.contains_key(record.sample_id.as_str()) {
            return Err(Error::MissingScore(record.sample_id.clone()));
        }
    }
    Ok(table.filter(|r| {
        let predicted = if lookup[r.sample_id.as_str()].score >= threshold {
            Label::Fake
        } else {
            Label::Real
        };
        predicted == r.label
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Unit-norm principal axes, first is the leading one.
    pub axes: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    /// (pc1, pc2) per record, in table order.
    pub coords: Vec<[f64; 2]>,
}

/// Projects the table onto its top two principal axes.
///
/// Each axis is signed so that its largest-magnitude component is positive
/// (first such component on exact ties). For one-dimensional tables the
/// second axis is zero.
pub fn pca_projection(table: &EmbeddingTable) -> Result<Projection> {
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = table.dimension();
    let n = table.len() as f64;
    let mut mean = vec![0.0; d];
    for r in table.records() {
        for (m, &v) in mean.iter_mut().zip(&r.embedding) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in table.records() {
        for ((c, &v), m) in centered.iter_mut().zip(&r.embedding).zip(&mean) {
            *c = v as f64 - m;
        }
        for i in 0..d {
            for j in i..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let axis = |rank: usize| -> (Vec<f64>, f64) {
        match order.get(rank) {
            Some(&col) => {
                let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
                let pivot = v
                    .iter()
                    .enumerate()
                    .fold(0usize, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
                if v[pivot] < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                (v, eig.eigenvalues[col].max(0.0))
            }
            None => (vec![0.0; d], 0.0),
        }
    };
    let (a1, v1) = axis(0);
    let (a2, v2) = axis(1);

    let coords = table
        .records()
        .iter()
        .map(|r| {
            let mut p = [0.0; 2];
            for (i, &v) in r.embedding.iter().enumerate() {
                let c = v as f64 - mean[i];
                p[0] += c * a1[i];
                p[1] += c * a2[i];
            }
            p
        })
        .collect();
    Ok(Projection {
        axes: [a1, a2],
        explained_variance: [v1, v2],
        coords,
    })
}
