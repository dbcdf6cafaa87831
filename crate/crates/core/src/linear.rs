//! Logistic regression trained by seeded mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Relative training-loss improvement below which training stops.
    pub tolerance: f64,
    /// Learning-rate halvings allowed when an epoch increases the loss.
    pub max_backoffs: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.5,
            max_epochs: 200,
            batch_size: 256,
            l2: 1e-5,
            patience: 8,
            validation_fraction: 0.1,
            seed: 7,
            tolerance: 1e-6,
            max_backoffs: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub backoffs: usize,
    pub final_learning_rate: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + exp(z)) without overflow
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Standardized {
    dim: usize,
    data: Vec<f64>,
    labels: Vec<f64>,
}

impl Standardized {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn loss(&self, w: &[f64], b: f64, l2: f64) -> f64 {
        if self.len() == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.len() {
            let z = b + dot(w, self.row(i));
            // cross-entropy: softplus(z) - y z
            total += softplus(z) - self.labels[i] * z;
        }
        total / self.len() as f64 + 0.5 * l2 * dot(w, w)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains a binary logistic model.
///
/// Every accepted epoch lowers the full training loss; an epoch that would
/// raise it is rolled back and retried at half the learning rate. Training
/// fails once `max_backoffs` halvings are spent.
pub fn train_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    cfg: &LogisticConfig,
) -> Result<(LogisticModel, TrainReport)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Training(format!(
            "need matching non-empty inputs, got {} rows and {} labels",
            x.len(),
            y.len()
        )));
    }
    let positives = y.iter().filter(|&&l| l).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::Training(format!(
            "degenerate labels: {positives} positives out of {}",
            y.len()
        )));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Training("ragged feature rows".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((x.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = if n_val >= 1 && x.len() - n_val >= 1 { n_val } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);

    let mut mean = vec![0.0; dim];
    for &i in train_idx {
        for (m, v) in mean.iter_mut().zip(&x[i]) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train_idx.len() as f64);
    let mut std = vec![0.0; dim];
    for &i in train_idx {
        for ((s, v), m) in std.iter_mut().zip(&x[i]).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    std.iter_mut().for_each(|s| {
        *s = (*s / train_idx.len() as f64).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    });

    let standardize = |idx: &[usize]| Standardized {
        dim,
        data: idx
            .iter()
            .flat_map(|&i| x[i].iter().zip(&mean).zip(&std).map(|((v, m), s)| (v - m) / s))
            .collect(),
        labels: idx.iter().map(|&i| if y[i] { 1.0 } else { 0.0 }).collect(),
    };
    let train = standardize(train_idx);
    let val = standardize(val_idx);

    let prior = train.labels.iter().sum::<f64>() / train.len() as f64;
    let prior = prior.clamp(1e-6, 1.0 - 1e-6);
    let mut w = vec![0.0; dim];
    let mut b = (prior / (1.0 - prior)).ln();
    let mut lr = cfg.learning_rate;
    let mut report = TrainReport::default();
    let mut prev_loss = train.loss(&w, b, cfg.l2);
    report.train_loss.push(prev_loss);

    let mut best = (f64::INFINITY, w.clone(), b);
    let mut stale_epochs = 0;
    let mut batch_order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; dim];

    let mut epoch = 0;
    while epoch < cfg.max_epochs {
        batch_order.shuffle(&mut rng);
        let (mut nw, mut nb) = (w.clone(), b);
        for batch in batch_order.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for &i in batch {
                let row = train.row(i);
                let err = sigmoid(nb + dot(&nw, row)) - train.labels[i];
                for (g, v) in grad.iter_mut().zip(row) {
                    *g += err * v;
                }
                gb += err;
            }
            let scale = lr / batch.len() as f64;
            for (wi, g) in nw.iter_mut().zip(&grad) {
                *wi -= scale * g + lr * cfg.l2 * *wi;
            }
            nb -= scale * gb;
        }
        let loss = train.loss(&nw, nb, cfg.l2);
        // rounding noise near a flat optimum is not treated as a rise
        if !loss.is_finite() || loss > prev_loss + 1e-12 * prev_loss.abs().max(1.0) {
            report.backoffs += 1;
            if report.backoffs > cfg.max_backoffs {
                return Err(Error::Training(format!(
                    "training loss rose from {prev_loss:.6} to {loss:.6} at epoch {epoch} \
                     after {} learning-rate halvings (lr = {lr:e})",
                    cfg.max_backoffs
                )));
            }
            lr *= 0.5;
            continue;
        }
        epoch += 1;
        w = nw;
        b = nb;
        report.train_loss.push(loss);
        let improvement = prev_loss - loss;
        prev_loss = loss;

        if val.len() > 0 {
            let vl = val.loss(&w, b, 0.0);
            report.validation_loss.push(vl);
            if vl < best.0 - 1e-12 {
                best = (vl, w.clone(), b);
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= cfg.patience {
                    break;
                }
            }
        }
        if improvement < cfg.tolerance * prev_loss.max(1e-12) {
            break;
        }
    }
    if val.len() > 0 && best.0.is_finite() {
        w = best.1;
        b = best.2;
    }
    report.final_learning_rate = lr;

    // fold the standardization back into raw-feature weights
    let weights: Vec<f64> = w.iter().zip(&std).map(|(wi, s)| wi / s).collect();
    let bias = b - weights.iter().zip(&mean).map(|(wi, m)| wi * m).sum::<f64>();
    Ok((LogisticModel { weights, bias }, report))
}

/// Area under the ROC curve via the rank-sum statistic, ties averaged.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 || scores.len() != labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}
