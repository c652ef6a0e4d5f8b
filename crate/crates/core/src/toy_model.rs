//! Desk-scale stand-ins for the detector: a seeded Gaussian-mixture
//! embedding generator and a full-batch logistic-regression classifier with
//! a finite-difference gradient check.
//!
//! Generator stream contract: mode directions come from
//! `ChaCha8Rng::seed_from_u64(DIRECTION_SEED)` and depend only on
//! (`dimension`, `fake_modes`); sample noise comes from
//! `ChaCha8Rng::seed_from_u64(cfg.seed)` through `rand_distr::StandardNormal`,
//! drawn coordinate by coordinate, all real records first, then fakes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::collapse::to_f64;
use crate::embedding_io::{EmbeddingRecord, EmbeddingTable, Label, ScoreRow, ScoreTable};
use crate::error::{Error, Result};

pub const DIRECTION_SEED: u64 = 0x6e63_2d6d_6f64_6573;
/// Training stops with `DivergenceDetected` once the loss exceeds this
/// multiple of the zero-model loss (ln 2).
pub const DIVERGENCE_FACTOR: f64 = 1e3;
pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Gradient components below this magnitude are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticConfig {
    pub dimension: usize,
    pub n_real: usize,
    pub n_fake: usize,
    /// Number of Gaussian components in the fake class.
    pub fake_modes: usize,
    /// Distance of every fake mode center from the real anchor (origin).
    pub mode_separation: f64,
    /// Per-coordinate standard deviation of every component.
    pub within_std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dimension: 16,
            n_real: 2_000,
            n_fake: 14_000,
            fake_modes: 7,
            mode_separation: 6.0,
            within_std: 1.0,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dimension == 0 || self.n_real == 0 || self.n_fake == 0 || self.fake_modes == 0 {
            return bad("dimension, n_real, n_fake and fake_modes must be positive");
        }
        if self.fake_modes > u16::MAX as usize {
            return bad("fake_modes must fit the u16 algorithm tag");
        }
        if !(self.within_std > 0.0 && self.within_std.is_finite()) {
            return bad("within_std must be positive and finite");
        }
        if !(self.mode_separation >= 0.0 && self.mode_separation.is_finite()) {
            return bad("mode_separation must be non-negative and finite");
        }
        Ok(())
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Unit directions of the fake modes. Orthonormal when `modes <= d`.
pub fn mode_directions(d: usize, modes: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(modes);
    while dirs.len() < modes {
        let mut v = gaussian_vector(&mut rng, d);
        if modes <= d {
            for u in &dirs {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        if normalize(&mut v) > 1e-9 {
            dirs.push(v);
        }
    }
    dirs
}

/// Real samples around the origin; fake sample `i` belongs to mode
/// `i % fake_modes` and is tagged `algorithm_id = mode + 1`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<EmbeddingTable> {
    cfg.validate()?;
    let d = cfg.dimension;
    let dirs = mode_directions(d, cfg.fake_modes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n_real + cfg.n_fake);

    for i in 0..cfg.n_real {
        let v = gaussian_vector(&mut rng, d)
            .into_iter()
            .map(|z| (cfg.within_std * z) as f32)
            .collect();
        records.push(EmbeddingRecord::new(format!("real-{i:06}"), Label::Real, 0, v));
    }
    for i in 0..cfg.n_fake {
        let mode = i % cfg.fake_modes;
        let v = gaussian_vector(&mut rng, d)
            .into_iter()
            .zip(&dirs[mode])
            .map(|(z, u)| (cfg.mode_separation * u + cfg.within_std * z) as f32)
            .collect();
        records.push(EmbeddingRecord::new(
            format!("fake-{i:06}"),
            Label::Fake,
            (mode + 1) as u16,
            v,
        ));
    }
    EmbeddingTable::new(d, records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    #[serde(rename = "w")]
    pub weights: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: f64,
    /// Loss before the first update and after every epoch.
    #[serde(rename = "loss")]
    pub training_log: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(dimension: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dimension],
            bias: 0.0,
            training_log: Vec::new(),
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

struct Design {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Design {
    fn from_table(table: &EmbeddingTable) -> Self {
        Design {
            x: table.records().iter().map(|r| to_f64(&r.embedding)).collect(),
            y: table
                .records()
                .iter()
                .map(|r| if r.label == Label::Fake { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Mean binary cross-entropy of sigmoid(w.x + b) against the labels.
    fn loss(&self, weights: &[f64], bias: f64) -> f64 {
        let mut total = 0.0;
        for (x, &y) in self.x.iter().zip(&self.y) {
            let z = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
            total += softplus(z) - y * z;
        }
        total / self.x.len() as f64
    }

    fn gradient(&self, weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; weights.len()];
        let mut gb = 0.0;
        for (x, &y) in self.x.iter().zip(&self.y) {
            let z = weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias;
            let r = sigmoid(z) - y;
            gw.iter_mut().zip(x).for_each(|(g, v)| *g += r * v);
            gb += r;
        }
        let n = self.x.len() as f64;
        gw.iter_mut().for_each(|g| *g /= n);
        (gw, gb / n)
    }
}

/// Step size no larger than 1/L for the mean logistic loss, using
/// L <= (mean ||x||^2 + 1) / 4.
pub fn safe_learning_rate(table: &EmbeddingTable) -> f64 {
    if table.is_empty() {
        return 1.0;
    }
    let mean_sq: f64 = table
        .records()
        .iter()
        .map(|r| r.embedding.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>())
        .sum::<f64>()
        / table.len() as f64;
    4.0 / (mean_sq + 1.0)
}

/// Full-batch gradient descent on the mean binary cross-entropy, starting
/// from the zero model. Fake is the positive class.
pub fn train_linear(table: &EmbeddingTable, epochs: usize, lr: f64) -> Result<LinearModel> {
    for label in Label::ALL {
        if table.count(label) == 0 {
            return Err(Error::EmptyClass(label));
        }
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidConfig(format!("learning rate {lr} must be positive")));
    }
    let design = Design::from_table(table);
    let mut model = LinearModel::zeros(table.dimension());
    let limit = DIVERGENCE_FACTOR * std::f64::consts::LN_2;

    let check = |epoch: usize, loss: f64| {
        if loss.is_finite() && loss <= limit {
            Ok(())
        } else {
            Err(Error::DivergenceDetected { epoch, loss })
        }
    };

    let initial = design.loss(&model.weights, model.bias);
    model.training_log.push(initial);
    for epoch in 0..epochs {
        let (gw, gb) = design.gradient(&model.weights, model.bias);
        model.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= lr * g);
        model.bias -= lr * gb;
        let loss = design.loss(&model.weights, model.bias);
        check(epoch + 1, loss)?;
        model.training_log.push(loss);
    }
    Ok(model)
}

fn check_dimension(model: &LinearModel, table: &EmbeddingTable) -> Result<()> {
    if model.weights.len() != table.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            found: table.dimension(),
        });
    }
    Ok(())
}

/// `sigmoid(w.x + b)` for every record, in table order.
pub fn predict_scores(model: &LinearModel, table: &EmbeddingTable) -> Result<ScoreTable> {
    check_dimension(model, table)?;
    ScoreTable::new(
        table
            .records()
            .iter()
            .map(|r| ScoreRow {
                sample_id: r.sample_id.clone(),
                label: r.label,
                score: sigmoid(model.logit(&to_f64(&r.embedding))),
            })
            .collect(),
    )
}

pub fn accuracy(model: &LinearModel, table: &EmbeddingTable) -> Result<f64> {
    let scores = predict_scores(model, table)?;
    if scores.is_empty() {
        return Ok(1.0);
    }
    let correct = scores
        .rows()
        .iter()
        .filter(|r| (r.score >= 0.5) == (r.label == Label::Fake))
        .count();
    Ok(correct as f64 / scores.len() as f64)
}

pub fn loss(model: &LinearModel, table: &EmbeddingTable) -> Result<f64> {
    check_dimension(model, table)?;
    Ok(Design::from_table(table).loss(&model.weights, model.bias))
}

/// Analytic gradient of the mean loss: (d/dw, d/db).
pub fn gradient(model: &LinearModel, table: &EmbeddingTable) -> Result<(Vec<f64>, f64)> {
    check_dimension(model, table)?;
    Ok(Design::from_table(table).gradient(&model.weights, model.bias))
}

/// Central finite differences of the mean loss, same layout as [`gradient`].
pub fn numerical_gradient(model: &LinearModel, table: &EmbeddingTable, epsilon: f64) -> Result<(Vec<f64>, f64)> {
    check_dimension(model, table)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} must be positive")));
    }
    let design = Design::from_table(table);
    let mut w = model.weights.clone();
    let mut gw = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + epsilon;
        let up = design.loss(&w, model.bias);
        w[i] = orig - epsilon;
        let down = design.loss(&w, model.bias);
        w[i] = orig;
        gw.push((up - down) / (2.0 * epsilon));
    }
    let gb = (design.loss(&w, model.bias + epsilon) - design.loss(&w, model.bias - epsilon)) / (2.0 * epsilon);
    Ok((gw, gb))
}

/// Largest coordinate-wise relative error between the analytic and the
/// finite-difference gradient, `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn grad_check(model: &LinearModel, table: &EmbeddingTable, epsilon: f64) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (aw, ab) = gradient(model, table)?;
    let (nw, nb) = numerical_gradient(model, table, epsilon)?;
    Ok(aw
        .iter()
        .chain(std::iter::once(&ab))
        .zip(nw.iter().chain(std::iter::once(&nb)))
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR))
        .fold(0.0, f64::max))
}
