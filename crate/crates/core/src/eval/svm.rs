//! Linear max-margin classifier: one-vs-rest hinge loss trained by
//! stochastic subgradient descent with L2 shrinkage on violations.

use serde::{Deserialize, Serialize};

use crate::seeds;

/// Sparse feature vector: strictly increasing indices with values.
pub type SparseFeatures = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmHyper {
    /// L2 regularization strength.
    pub lambda: f64,
    /// Maximum passes over the training set; training stops early once
    /// an epoch runs violation-free.
    pub epochs: u32,
    pub learning_rate: f64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self { lambda: 1e-4, epochs: 40, learning_rate: 0.1 }
    }
}

/// One weight vector and bias per class, one-vs-rest.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub classes: Vec<u32>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    pub dim: usize,
}

impl LinearModel {
    /// Per-class decision values for `x`, aligned with `classes`.
    pub fn decision(&self, x: &SparseFeatures) -> Vec<f64> {
        self.classes
            .iter()
            .enumerate()
            .map(|(c, _)| {
                let w = &self.weights[c];
                let mut score = self.biases[c];
                for &(i, v) in x {
                    score += w[i as usize] * v;
                }
                score
            })
            .collect()
    }

    /// Highest-margin class; ties resolve to the smaller label.
    pub fn predict(&self, x: &SparseFeatures) -> u32 {
        let scores = self.decision(x);
        let mut best = 0usize;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    pub fn weights(&self, class_index: usize) -> &[f64] {
        &self.weights[class_index]
    }

    pub fn is_finite(&self) -> bool {
        self.biases.iter().all(|b| b.is_finite())
            && self
                .weights
                .iter()
                .all(|w| w.iter().all(|v| v.is_finite()))
    }
}

/// Number of margin violations (`y * f(x) < 1`) of a binary classifier
/// over a dataset; zero means the hinge loss is zero.
fn violations(
    weights: &[f64],
    scale: f64,
    bias: f64,
    xs: &[SparseFeatures],
    ys: &[f64],
) -> usize {
    xs.iter()
        .zip(ys)
        .filter(|(x, &y)| {
            let mut dot = 0.0;
            for &(i, v) in x.iter() {
                dot += weights[i as usize] * v;
            }
            y * (scale * dot + bias) < 1.0
        })
        .count()
}

/// Train one binary hinge-loss classifier. The weight vector is kept
/// as `scale * v` so the L2 shrinkage on a violation is O(1) and the
/// sparse update O(nnz).
fn train_binary(
    xs: &[SparseFeatures],
    ys: &[f64],
    dim: usize,
    hyper: &SvmHyper,
    seed: u64,
) -> (Vec<f64>, f64) {
    use rand::seq::SliceRandom;

    let mut v = vec![0.0f64; dim];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = seeds::rng_for(seed, &[seeds::stream::SVM]);
    let shrink = 1.0 - hyper.learning_rate * hyper.lambda;

    for _ in 0..hyper.epochs {
        if violations(&v, scale, bias, xs, ys) == 0 {
            break;
        }
        order.shuffle(&mut rng);
        for &i in &order {
            let x = &xs[i];
            let y = ys[i];
            let mut dot = 0.0;
            for &(j, val) in x {
                dot += v[j as usize] * val;
            }
            if y * (scale * dot + bias) < 1.0 {
                scale *= shrink;
                if scale < 1e-9 {
                    for w in &mut v {
                        *w *= scale;
                    }
                    scale = 1.0;
                }
                let step = hyper.learning_rate * y / scale;
                for &(j, val) in x {
                    v[j as usize] += step * val;
                }
                bias += hyper.learning_rate * y;
            }
        }
    }

    for w in &mut v {
        *w *= scale;
    }
    (v, bias)
}

/// Train one binary classifier per class label present in `labels`.
pub fn train_one_vs_rest(
    features: &[SparseFeatures],
    labels: &[u32],
    dim: usize,
    hyper: &SvmHyper,
    seed: u64,
) -> LinearModel {
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for &class in &classes {
        let ys: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let (w, b) = train_binary(features, &ys, dim, hyper, seeds::mix(seed, &[class as u64]));
        weights.push(w);
        biases.push(b);
    }
    LinearModel { classes, weights, biases, dim }
}
