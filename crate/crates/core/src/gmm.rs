//! Diagonal-covariance Gaussian mixtures fit by EM, and the per-tag
//! positive/negative mixture pair scored by a summed log-likelihood ratio.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::tags::{TagSet, TAG_LETTERS};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Mixture of diagonal Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl Gmm {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_components();
        if m == 0 || self.means.len() != m || self.variances.len() != m {
            return Err(Error::Model("mixture has inconsistent component counts".into()));
        }
        let d = self.dim();
        if self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(Error::Model("mixture components differ in dimension".into()));
        }
        if self.variances.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(Error::Model("mixture variances must be positive".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Model("mixture weights are not on the simplex".into()));
        }
        Ok(())
    }

    /// Precomputes log normalizers and inverse variances for repeated evaluation.
    pub fn scorer(&self) -> GmmScorer {
        let d = self.dim() as f64;
        let offsets = self
            .weights
            .iter()
            .zip(&self.variances)
            .map(|(&w, var)| w.ln() - 0.5 * (d * (2.0 * PI).ln() + var.iter().map(|v| v.ln()).sum::<f64>()))
            .collect();
        let inv_variances = self
            .variances
            .iter()
            .map(|var| var.iter().map(|v| 1.0 / v).collect())
            .collect();
        GmmScorer {
            offsets,
            means: self.means.clone(),
            inv_variances,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.scorer().log_density(x)
    }
}

/// Evaluation-ready form of a [`Gmm`].
#[derive(Debug, Clone)]
pub struct GmmScorer {
    offsets: Vec<f64>,
    means: Vec<Vec<f64>>,
    inv_variances: Vec<Vec<f64>>,
}

impl GmmScorer {
    /// Writes `log(ω_m · N(x; μ_m, Σ_m))` for every component into `out`.
    pub fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        for (m, slot) in out.iter_mut().enumerate() {
            let quad: f64 = x
                .iter()
                .zip(&self.means[m])
                .zip(&self.inv_variances[m])
                .map(|((xi, mu), iv)| (xi - mu) * (xi - mu) * iv)
                .sum();
            *slot = self.offsets[m] - 0.5 * quad;
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.offsets.len()];
        self.component_log_densities(x, &mut buf);
        log_sum_exp(&buf)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `log Σ_m ω_m N(x; μ_m, Σ_m)`.
pub fn gmm_log_density(model: &Gmm, x: &[f64]) -> f64 {
    model.log_density(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub components: usize,
    pub max_iter: usize,
    /// Stop once the mean per-frame log-likelihood improves by less than this.
    pub tolerance: f64,
    pub variance_floor: f64,
    /// Lloyd iterations after k-means++ seeding.
    pub kmeans_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            components: 8,
            max_iter: 200,
            tolerance: 1e-6,
            variance_floor: VARIANCE_FLOOR,
            kmeans_iter: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Mean per-frame log-likelihood evaluated at the start of each EM iteration,
    /// plus a final entry for the returned parameters.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = sq_distance(x, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn kmeans_pp(data: &Array2<f64>, k: usize, iterations: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = data.nrows();
    let rows: Vec<&[f64]> = data.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
    let mut centers = vec![rows[rng.random_range(0..n)].to_vec()];
    let mut dist: Vec<f64> = rows.iter().map(|r| sq_distance(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(rows[pick].to_vec());
        let newest = centers.last().unwrap();
        for (d, r) in dist.iter_mut().zip(&rows) {
            *d = d.min(sq_distance(r, newest));
        }
    }

    let dim = data.ncols();
    let mut assignment: Vec<usize> = rows.iter().map(|r| nearest(r, &centers)).collect();
    for _ in 0..iterations {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &a) in rows.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    (centers, assignment)
}

fn initial_mixture(data: &Array2<f64>, config: &EmConfig, rng: &mut ChaCha8Rng) -> Gmm {
    let (n, dim) = data.dim();
    let k = config.components;
    let (centers, assignment) = kmeans_pp(data, k, config.kmeans_iter, rng);
    let global_var: Vec<f64> = data
        .var_axis(Axis(0), 0.0)
        .iter()
        .map(|v| v.max(config.variance_floor))
        .collect();

    let mut counts = vec![0usize; k];
    let mut sq = vec![vec![0.0; dim]; k];
    for (row, &a) in data.rows().into_iter().zip(&assignment) {
        counts[a] += 1;
        for ((s, x), c) in sq[a].iter_mut().zip(row).zip(&centers[a]) {
            *s += (x - c) * (x - c);
        }
    }
    // Every component keeps positive weight, even if its cluster came up empty.
    let weights = counts.iter().map(|&c| (c as f64 + 1.0) / (n + k) as f64).collect();
    let variances = (0..k)
        .map(|c| {
            if counts[c] < 2 {
                global_var.clone()
            } else {
                sq[c].iter().map(|s| (s / counts[c] as f64).max(config.variance_floor)).collect()
            }
        })
        .collect();
    Gmm {
        weights,
        means: centers,
        variances,
    }
}

/// Runs one E-step: fills `resp` (n × M) and returns the mean log-likelihood.
fn expectation(model: &Gmm, data: &Array2<f64>, resp: &mut Array2<f64>) -> f64 {
    let scorer = model.scorer();
    let mut total = 0.0;
    let mut buf = vec![0.0; model.num_components()];
    for (row, mut r) in data.rows().into_iter().zip(resp.rows_mut()) {
        scorer.component_log_densities(row.as_slice().expect("standard layout"), &mut buf);
        let lse = log_sum_exp(&buf);
        total += lse;
        for (slot, &lp) in r.iter_mut().zip(&buf) {
            *slot = (lp - lse).exp();
        }
    }
    total / data.nrows() as f64
}

fn maximization(data: &Array2<f64>, resp: &Array2<f64>, previous: &Gmm, floor: f64) -> Gmm {
    let (n, dim) = data.dim();
    let k = resp.ncols();
    let mass = resp.sum_axis(Axis(0));
    let mut means = vec![vec![0.0; dim]; k];
    for (row, r) in data.rows().into_iter().zip(resp.rows()) {
        for m in 0..k {
            let w = r[m];
            for (acc, x) in means[m].iter_mut().zip(row) {
                *acc += w * x;
            }
        }
    }
    let mut variances = vec![vec![0.0; dim]; k];
    for m in 0..k {
        if mass[m] > 0.0 {
            means[m].iter_mut().for_each(|v| *v /= mass[m]);
        } else {
            means[m].clone_from(&previous.means[m]);
        }
    }
    for (row, r) in data.rows().into_iter().zip(resp.rows()) {
        for m in 0..k {
            let w = r[m];
            for ((acc, x), mu) in variances[m].iter_mut().zip(row).zip(&means[m]) {
                *acc += w * (x - mu) * (x - mu);
            }
        }
    }
    for m in 0..k {
        if mass[m] > 0.0 {
            variances[m].iter_mut().for_each(|v| *v = (*v / mass[m]).max(floor));
        } else {
            variances[m].clone_from(&previous.variances[m]);
        }
    }
    let weights = mass.iter().map(|&w| w / n as f64).collect();
    Gmm {
        weights,
        means,
        variances,
    }
}

/// k-means++ seeded EM. Rows of `frames` are observations.
pub fn fit_gmm(frames: ArrayView2<f64>, config: &EmConfig, seed: u64) -> Result<(Gmm, FitTrace)> {
    if config.components == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    if frames.nrows() < config.components {
        return Err(Error::InsufficientData {
            needed: config.components,
            available: frames.nrows(),
        });
    }
    let data = frames.as_standard_layout().to_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = initial_mixture(&data, config, &mut rng);
    let mut resp = Array2::zeros((data.nrows(), config.components));
    let mut log_likelihoods = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iter {
        let ll = expectation(&model, &data, &mut resp);
        if let Some(&last) = log_likelihoods.last() {
            if ll - last < config.tolerance {
                log_likelihoods.push(ll);
                converged = true;
                break;
            }
        }
        log_likelihoods.push(ll);
        model = maximization(&data, &resp, &model, config.variance_floor);
    }
    if !converged {
        log_likelihoods.push(expectation(&model, &data, &mut resp));
    }
    Ok((
        model,
        FitTrace {
            log_likelihoods,
            converged,
        },
    ))
}

/// Positive and negative mixtures for one tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmTagModel {
    pub tag: char,
    pub positive: Gmm,
    pub negative: Gmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub em: EmConfig,
    /// Cap on frames per class pool; larger pools are subsampled with an even stride.
    pub max_frames: Option<usize>,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            em: EmConfig::default(),
            max_frames: None,
        }
    }
}

fn stack_pool(matrices: &[&FeatureMatrix], max_frames: Option<usize>) -> Array2<f64> {
    let dim = matrices[0].dim();
    let total: usize = matrices.iter().map(|m| m.num_frames()).sum();
    let keep = max_frames.map_or(total, |cap| cap.min(total));
    let mut out = Array2::zeros((keep, dim));
    let mut out_row = 0;
    let mut global = 0usize;
    // Row i of the pool is kept when it is the floor(j·total/keep)-th row for some j.
    let next_pick = |j: usize| if j < keep { j * total / keep } else { usize::MAX };
    let mut target = next_pick(0);
    for m in matrices {
        for row in m.features.rows() {
            if global == target {
                out.row_mut(out_row).assign(&row);
                out_row += 1;
                target = next_pick(out_row);
            }
            global += 1;
        }
    }
    debug_assert_eq!(out_row, keep);
    out
}

/// Fits the positive mixture on every frame of chunks carrying the tag and the
/// negative mixture on every other frame. Both fits share `seed`.
pub fn train_tag_models(
    corpus: &[FeatureMatrix],
    labels: &[TagSet],
    tag: usize,
    config: &GmmConfig,
    seed: u64,
) -> Result<GmmTagModel> {
    if corpus.len() != labels.len() {
        return Err(Error::Shape {
            expected: corpus.len(),
            actual: labels.len(),
        });
    }
    let letter = TAG_LETTERS[tag];
    let (positive, negative): (Vec<&FeatureMatrix>, Vec<&FeatureMatrix>) = {
        let (p, n): (Vec<_>, Vec<_>) = corpus.iter().zip(labels).partition(|(_, l)| l.contains(tag));
        (p.into_iter().map(|(m, _)| m).collect(), n.into_iter().map(|(m, _)| m).collect())
    };
    let pool = |side: &[&FeatureMatrix], name| {
        if side.iter().all(|m| m.num_frames() == 0) {
            Err(Error::ClassStarvation { tag: letter, side: name })
        } else {
            Ok(stack_pool(side, config.max_frames))
        }
    };
    let pos_pool = pool(&positive, "positive")?;
    let neg_pool = pool(&negative, "negative")?;
    let (positive, _) = fit_gmm(pos_pool.view(), &config.em, seed)?;
    let (negative, _) = fit_gmm(neg_pool.view(), &config.em, seed)?;
    Ok(GmmTagModel {
        tag: letter,
        positive,
        negative,
    })
}

/// Σ_j log f(x_j; Θ_pos) − Σ_j log f(x_j; Θ_neg) over the rows of `frames`.
pub fn score_chunk(model: &GmmTagModel, frames: ArrayView2<f64>) -> f64 {
    let (pos, neg) = (model.positive.scorer(), model.negative.scorer());
    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    for row in frames.rows() {
        let x = row.to_vec();
        pos_sum += pos.log_density(&x);
        neg_sum += neg.log_density(&x);
    }
    pos_sum - neg_sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FrameLayout;
    use ndarray::array;
    use rand_distr::{Distribution, Normal};

    fn gaussian_cloud(n: usize, dim: usize, center: f64, std: f64, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).unwrap();
        Array2::from_shape_simple_fn((n, dim), || center + normal.sample(&mut rng))
    }

    fn as_features(data: Array2<f64>) -> FeatureMatrix {
        let rows = data.nrows();
        FeatureMatrix {
            chunk_id: "x".into(),
            features: data,
            layout: FrameLayout {
                sample_rate: 16_000,
                window: 320,
                hop: 160,
                num_samples: 320 + 160 * rows.saturating_sub(1),
            },
        }
    }

    fn unit_model(dim: usize, components: usize) -> Gmm {
        Gmm {
            weights: vec![1.0 / components as f64; components],
            means: vec![vec![0.0; dim]; components],
            variances: vec![vec![1.0; dim]; components],
        }
    }

    #[test]
    fn standard_normal_at_origin() {
        let expected = -12.0 * (2.0 * PI).ln();
        assert!((gmm_log_density(&unit_model(24, 1), &[0.0; 24]) - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_components_collapse() {
        let x: Vec<f64> = (0..24).map(|i| 0.1 * i as f64 - 1.0).collect();
        let one = gmm_log_density(&unit_model(24, 1), &x);
        let two = gmm_log_density(&unit_model(24, 2), &x);
        assert!((one - two).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_matches_naive_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let dim = 5;
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let model = Gmm {
                weights: raw.iter().map(|w| w / total).collect(),
                means: (0..3).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
                variances: (0..3).map(|_| (0..dim).map(|_| rng.random_range(0.3..2.0)).collect()).collect(),
            };
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let naive: f64 = (0..3)
                .map(|m| {
                    let mut density = model.weights[m];
                    for d in 0..dim {
                        let v = model.variances[m][d];
                        let diff = x[d] - model.means[m][d];
                        density *= (-(diff * diff) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
                    }
                    density
                })
                .sum::<f64>()
                .ln();
            assert!((gmm_log_density(&model, &x) - naive).abs() < 1e-10);
        }
    }

    #[test]
    fn single_component_matches_sample_moments() {
        let data = gaussian_cloud(500, 3, 1.5, 0.7, 2);
        let config = EmConfig { components: 1, ..EmConfig::default() };
        let (model, _) = fit_gmm(data.view(), &config, 0).unwrap();
        let mean = data.mean_axis(Axis(0)).unwrap();
        let var = data.var_axis(Axis(0), 0.0);
        for d in 0..3 {
            assert!((model.means[0][d] - mean[d]).abs() < 1e-8);
            assert!((model.variances[0][d] - var[d]).abs() < 1e-8);
        }
        assert_eq!(model.weights, vec![1.0]);
    }

    #[test]
    fn separated_clusters_get_equal_weight() {
        let mut data = gaussian_cloud(300, 2, -10.0, 1.0, 3);
        data.append(Axis(0), gaussian_cloud(300, 2, 10.0, 1.0, 4).view()).unwrap();
        let config = EmConfig { components: 2, ..EmConfig::default() };
        let (model, trace) = fit_gmm(data.view(), &config, 9).unwrap();
        for w in &model.weights {
            assert!((w - 0.5).abs() < 0.02, "weights {:?}", model.weights);
        }
        assert!(trace.converged);
        model.validate().unwrap();
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let mut data = gaussian_cloud(200, 4, 0.0, 1.0, 5);
        data.append(Axis(0), gaussian_cloud(150, 4, 3.0, 0.5, 6).view()).unwrap();
        let (_, trace) = fit_gmm(data.view(), &EmConfig { components: 5, ..EmConfig::default() }, 1).unwrap();
        for pair in trace.log_likelihoods.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-9, "{pair:?}");
        }
    }

    #[test]
    fn too_few_frames() {
        let data = gaussian_cloud(5, 2, 0.0, 1.0, 0);
        assert!(matches!(
            fit_gmm(data.view(), &EmConfig::default(), 0),
            Err(Error::InsufficientData { needed: 8, available: 5 })
        ));
    }

    #[test]
    fn identical_models_score_zero_and_swap_negates() {
        let a = unit_model(2, 1);
        let mut b = unit_model(2, 1);
        b.means[0] = vec![1.0, -1.0];
        let frames = array![[0.3, 0.1], [1.2, -0.8], [-0.5, 0.4]];
        let same = GmmTagModel { tag: 'c', positive: a.clone(), negative: a.clone() };
        assert_eq!(score_chunk(&same, frames.view()), 0.0);
        let forward = GmmTagModel { tag: 'c', positive: a.clone(), negative: b.clone() };
        let swapped = GmmTagModel { tag: 'c', positive: b, negative: a };
        assert_eq!(score_chunk(&forward, frames.view()), -score_chunk(&swapped, frames.view()));
    }

    #[test]
    fn three_frame_hand_ratio() {
        // 1-D: positive N(1, 1), negative N(0, 4).
        let pos = Gmm { weights: vec![1.0], means: vec![vec![1.0]], variances: vec![vec![1.0]] };
        let neg = Gmm { weights: vec![1.0], means: vec![vec![0.0]], variances: vec![vec![4.0]] };
        let model = GmmTagModel { tag: 'b', positive: pos, negative: neg };
        let xs = [0.5, 2.0, -1.0];
        let log_n = |x: f64, mu: f64, var: f64| -0.5 * (2.0 * PI * var).ln() - (x - mu).powi(2) / (2.0 * var);
        let expected: f64 = xs.iter().map(|&x| log_n(x, 1.0, 1.0) - log_n(x, 0.0, 4.0)).sum();
        let frames = Array2::from_shape_vec((3, 1), xs.to_vec()).unwrap();
        assert!((score_chunk(&model, frames.view()) - expected).abs() < 1e-10);
    }

    #[test]
    fn every_chunk_tagged_starves_negatives() {
        let corpus = vec![as_features(gaussian_cloud(20, 2, 0.0, 1.0, 1))];
        let labels = vec![TagSet::parse("c").unwrap()];
        let err = train_tag_models(&corpus, &labels, 1, &GmmConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::ClassStarvation { tag: 'c', side: "negative" }));
    }

    #[test]
    fn positive_model_sits_on_tag_cluster() {
        let corpus: Vec<FeatureMatrix> = (0..6)
            .map(|i| {
                let center = if i % 2 == 0 { 5.0 } else { -5.0 };
                as_features(gaussian_cloud(40, 3, center, 0.5, i))
            })
            .collect();
        let labels: Vec<TagSet> = (0..6)
            .map(|i| if i % 2 == 0 { TagSet::parse("m").unwrap() } else { TagSet::EMPTY })
            .collect();
        let config = GmmConfig { em: EmConfig { components: 2, ..EmConfig::default() }, max_frames: None };
        let model = train_tag_models(&corpus, &labels, 3, &config, 4).unwrap();
        assert_eq!(model.tag, 'm');
        for mean in model.positive.means.iter().flatten() {
            assert!((mean - 5.0).abs() < 1.0);
        }
        for mean in model.negative.means.iter().flatten() {
            assert!((mean + 5.0).abs() < 1.0);
        }

        // Swapping which chunks carry the tag swaps the fitted mixtures.
        let flipped: Vec<TagSet> = labels
            .iter()
            .map(|l| if l.is_empty() { TagSet::parse("m").unwrap() } else { TagSet::EMPTY })
            .collect();
        let swapped = train_tag_models(&corpus, &flipped, 3, &config, 4).unwrap();
        assert_eq!(swapped.positive, model.negative);
        assert_eq!(swapped.negative, model.positive);
        let probe = gaussian_cloud(10, 3, 4.0, 1.0, 99);
        assert_eq!(score_chunk(&model, probe.view()), -score_chunk(&swapped, probe.view()));
    }

    #[test]
    fn pool_subsampling_is_even() {
        let m = as_features(Array2::from_shape_fn((10, 1), |(r, _)| r as f64));
        let pool = stack_pool(&[&m, &m], Some(5));
        let picked: Vec<f64> = pool.column(0).to_vec();
        assert_eq!(picked, vec![0.0, 4.0, 8.0, 2.0, 6.0]);
        assert_eq!(stack_pool(&[&m], None).nrows(), 10);
    }
}
