//! Bag-level multiple-instance SVM with a linear kernel.
//!
//! Each chunk is a bag of instances (mean-pooled MFCC frames over sliding
//! segments). Training starts from the centroid of every positive bag,
//! then alternates between fitting a linear SVM on the current positive
//! witnesses plus every negative instance and re-selecting each positive
//! bag's highest-scoring instance, until the witnesses stop changing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const INSTANCE_WINDOW_MS: f64 = 400.0;
pub const INSTANCE_HOP_MS: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub bag_id: String,
    pub instances: Vec<Vec<f64>>,
    /// +1 or −1.
    pub label: i8,
}

impl Bag {
    pub fn is_positive(&self) -> bool {
        self.label > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
    /// Hinge-loss weight in ½‖w‖² + A·Σ ξ_i.
    pub a: f64,
}

impl LinearSvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

/// Mean-pools frames into segment instances. Segment `k` covers samples
/// `[k·hop, k·hop + window)` of the source signal and takes the mean of the
/// frames starting inside it; segments running past the end are dropped.
pub fn pool_instances(features: &FeatureMatrix, window_ms: f64, hop_ms: f64) -> Result<Vec<Vec<f64>>> {
    let layout = features.layout;
    let rate = layout.sample_rate as f64;
    let seg_len = (window_ms * rate / 1000.0).round() as usize;
    let seg_hop = (hop_ms * rate / 1000.0).round() as usize;
    if seg_hop == 0 || seg_len < seg_hop {
        return Err(Error::Config(format!(
            "instance segments need window >= hop > 0, got {window_ms}/{hop_ms} ms"
        )));
    }
    let rows = features.num_frames();
    let mut instances = Vec::new();
    let mut start = 0usize;
    while start + seg_len <= layout.num_samples {
        let first = start.div_ceil(layout.hop);
        let end = ((start + seg_len).div_ceil(layout.hop)).min(rows);
        if first < end {
            let mut mean = vec![0.0; features.dim()];
            for row in features.features.slice(ndarray::s![first..end, ..]).rows() {
                for (acc, &v) in mean.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            let count = (end - first) as f64;
            mean.iter_mut().for_each(|v| *v /= count);
            instances.push(mean);
        }
        start += seg_hop;
    }
    if instances.is_empty() {
        return Err(Error::EmptyInput(format!(
            "chunk `{}` is shorter than one {window_ms} ms instance segment",
            features.chunk_id
        )));
    }
    Ok(instances)
}

pub fn misvm_score(svm: &LinearSvm, instances: &[Vec<f64>]) -> f64 {
    instances
        .iter()
        .map(|x| svm.decision(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// γ = Y · max_j (⟨w, x_j⟩ + b).
pub fn bag_margin(svm: &LinearSvm, bag: &Bag) -> f64 {
    f64::from(bag.label) * misvm_score(svm, &bag.instances)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            iterations: 100_000,
            seed: 0,
        }
    }
}

/// ½‖w‖² + A·Σ max(0, 1 − y(⟨w,x⟩ + b)).
pub fn primal_objective(svm: &LinearSvm, positives: &[Vec<f64>], negatives: &[Vec<f64>]) -> f64 {
    let hinge = |x: &Vec<f64>, y: f64| (1.0 - y * svm.decision(x)).max(0.0);
    let loss: f64 = positives.iter().map(|x| hinge(x, 1.0)).sum::<f64>()
        + negatives.iter().map(|x| hinge(x, -1.0)).sum::<f64>();
    0.5 * svm.w.iter().map(|w| w * w).sum::<f64>() + svm.a * loss
}

/// Averaged stochastic subgradient descent (Pegasos step sizes, unregularized
/// bias, average over the second half of the iterates).
pub fn solve_linear_svm(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    a: f64,
    options: &SvmOptions,
) -> Result<LinearSvm> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyInput(format!(
            "linear svm needs both classes ({} positive, {} negative)",
            positives.len(),
            negatives.len()
        )));
    }
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Config(format!("svm regularization must be finite and >= 0, got {a}")));
    }
    let dim = positives[0].len();
    if positives.iter().chain(negatives).any(|x| x.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: positives.iter().chain(negatives).map(Vec::len).find(|&l| l != dim).unwrap(),
        });
    }
    if a == 0.0 {
        return Ok(LinearSvm { w: vec![0.0; dim], b: 0.0, a });
    }

    let samples: Vec<(&[f64], f64)> = positives
        .iter()
        .map(|x| (x.as_slice(), 1.0))
        .chain(negatives.iter().map(|x| (x.as_slice(), -1.0)))
        .collect();
    let n = samples.len();
    // Same minimizer as ½‖w‖² + A·Σ hinge, rescaled by 1 / (A·n).
    let lambda = 1.0 / (a * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let iterations = options.iterations.max(2);
    let average_from = iterations / 2 + 1;

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    for t in 1..=iterations {
        let (x, y) = samples[rng.random_range(0..n)];
        let eta = 1.0 / (lambda * t as f64);
        let margin = y * (w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b);
        let shrink = 1.0 - 1.0 / t as f64;
        w.iter_mut().for_each(|v| *v *= shrink);
        if margin < 1.0 {
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi += eta * y * xi;
            }
            b += eta * y;
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let scale = radius / norm;
            w.iter_mut().for_each(|v| *v *= scale);
        }
        if t >= average_from {
            averaged += 1;
            let k = averaged as f64;
            for (avg, wi) in w_avg.iter_mut().zip(&w) {
                *avg += (wi - *avg) / k;
            }
            b_avg += (b - b_avg) / k;
        }
    }
    Ok(LinearSvm { w: w_avg, b: b_avg, a })
}

/// Representative of one positive bag during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Witness {
    Centroid,
    Instance(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisvmFit {
    pub svm: LinearSvm,
    /// One entry per positive bag, in bag order.
    pub witnesses: Vec<Witness>,
    pub converged: bool,
    pub outer_iterations: usize,
}

fn centroid(instances: &[Vec<f64>]) -> Vec<f64> {
    let mut sum = vec![0.0; instances[0].len()];
    for x in instances {
        for (s, v) in sum.iter_mut().zip(x) {
            *s += v;
        }
    }
    let count = instances.len() as f64;
    sum.into_iter().map(|s| s / count).collect()
}

/// Index of the highest-scoring instance; ties go to the lowest index.
pub fn best_instance(svm: &LinearSvm, instances: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (j, x) in instances.iter().enumerate() {
        let score = svm.decision(x);
        if score > best_score {
            best = j;
            best_score = score;
        }
    }
    best
}

/// Alternating witness selection. Stops when no witness vector changes or after
/// `max_outer` SVM fits, whichever comes first.
pub fn misvm_train(bags: &[Bag], a: f64, max_outer: usize, options: &SvmOptions) -> Result<MisvmFit> {
    let positive: Vec<&Bag> = bags.iter().filter(|b| b.is_positive()).collect();
    if positive.is_empty() || positive.len() == bags.len() {
        return Err(Error::EmptyInput(format!(
            "mi-svm needs positive and negative bags ({} of {} positive)",
            positive.len(),
            bags.len()
        )));
    }
    if let Some(empty) = bags.iter().find(|b| b.instances.is_empty()) {
        return Err(Error::EmptyInput(format!("bag `{}` has no instances", empty.bag_id)));
    }
    let negatives: Vec<Vec<f64>> = bags
        .iter()
        .filter(|b| !b.is_positive())
        .flat_map(|b| b.instances.iter().cloned())
        .collect();

    let mut witnesses = vec![Witness::Centroid; positive.len()];
    let mut current: Vec<Vec<f64>> = positive.iter().map(|b| centroid(&b.instances)).collect();
    let mut svm = None;
    let mut converged = false;
    let mut outer = 0;
    while outer < max_outer.max(1) {
        outer += 1;
        let fitted = solve_linear_svm(&current, &negatives, a, options)?;
        let mut changed = false;
        for (i, bag) in positive.iter().enumerate() {
            let j = best_instance(&fitted, &bag.instances);
            if bag.instances[j] != current[i] {
                current[i].clone_from(&bag.instances[j]);
                changed = true;
            }
            witnesses[i] = Witness::Instance(j);
        }
        svm = Some(fitted);
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("mi-svm stopped after {outer} outer iterations without converging");
    }
    Ok(MisvmFit {
        svm: svm.expect("at least one outer iteration"),
        witnesses,
        converged,
        outer_iterations: outer,
    })
}
