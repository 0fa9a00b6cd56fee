#![allow(dead_code)]

use audiotag::dnn::{backprop, forward_batch, init_mlp, mmse_loss, Activation, DropoutMasks, MlpParams, Mode};
use audiotag::eval::ScoredChunk;
use audiotag::misvm::{primal_objective, solve_linear_svm, Bag, SvmOptions};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradCheck {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub dropout: bool,
    pub max_rel_error: f64,
    pub checked: usize,
}

fn loss_at(params: &MlpParams, x: &Array2<f64>, t: &Array2<f64>, masks: Option<&DropoutMasks>) -> f64 {
    let mode = masks.map_or(Mode::Inference, Mode::Train);
    let acts = forward_batch(params, x.view(), mode).unwrap();
    mmse_loss(acts.output.view(), t.view()).unwrap()
}

fn near_relu_kink(params: &MlpParams, x: &Array2<f64>, masks: Option<&DropoutMasks>) -> bool {
    let mode = masks.map_or(Mode::Inference, Mode::Train);
    let acts = forward_batch(params, x.view(), mode).unwrap();
    let hidden = &acts.pre_activations[..acts.pre_activations.len() - 1];
    hidden.iter().any(|z| z.iter().any(|v| v.abs() < 1e-3))
}

/// Central differences against backprop on one random network.
/// Relative error is `|a − n| / max(|a|, |n|)`, skipped when both are below 1e-8.
pub fn gradient_check(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(2..=6)];
    for _ in 0..depth - 1 {
        sizes.push(rng.random_range(2..=6));
    }
    sizes.push(rng.random_range(1..=4));
    let activation = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Sigmoid };
    let dropout = rng.random_bool(0.3);
    let batch = rng.random_range(1..=4);

    let (params, x, t, masks) = loop {
        let mut params = init_mlp(&sizes, rng.random()).unwrap().with_hidden_activation(activation);
        for b in params.biases.iter_mut() {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = Array2::from_shape_simple_fn((batch, sizes[0]), || rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_simple_fn((batch, *sizes.last().unwrap()), || rng.random_range(0.0..1.0));
        let masks = dropout.then(|| DropoutMasks::sample(&params, batch, 0.3, 0.3, &mut rng));
        if activation == Activation::Sigmoid || !near_relu_kink(&params, &x, masks.as_ref()) {
            break (params, x, t, masks);
        }
    };

    let (_, grads) = backprop(&params, x.view(), t.view(), masks.as_ref()).unwrap();
    let h = 1e-4;
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let mut compare = |analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-8 {
            max_rel = max_rel.max((analytic - numeric).abs() / scale);
        }
        checked += 1;
    };
    for l in 0..params.num_layers() {
        for idx in 0..params.weights[l].len() {
            let (r, c) = (idx / params.weights[l].ncols(), idx % params.weights[l].ncols());
            let mut p = params.clone();
            p.weights[l][[r, c]] += h;
            let up = loss_at(&p, &x, &t, masks.as_ref());
            p.weights[l][[r, c]] -= 2.0 * h;
            let down = loss_at(&p, &x, &t, masks.as_ref());
            compare(grads.weights[l][[r, c]], (up - down) / (2.0 * h));
        }
        for j in 0..params.biases[l].len() {
            let mut p = params.clone();
            p.biases[l][j] += h;
            let up = loss_at(&p, &x, &t, masks.as_ref());
            p.biases[l][j] -= 2.0 * h;
            let down = loss_at(&p, &x, &t, masks.as_ref());
            compare(grads.biases[l][j], (up - down) / (2.0 * h));
        }
    }
    GradCheck {
        layer_sizes: sizes,
        activation,
        dropout,
        max_rel_error: max_rel,
        checked,
    }
}

pub fn scored(pairs: &[(f64, bool)]) -> Vec<ScoredChunk> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(score, reference))| ScoredChunk {
            chunk_id: format!("c{i}"),
            tag: 'b',
            score,
            reference,
        })
        .collect()
}

/// Tries every threshold in scores ∪ {+inf}, counting errors from scratch.
pub fn brute_force_eer(items: &[ScoredChunk]) -> f64 {
    let p = items.iter().filter(|s| s.reference).count();
    let n = items.len() - p;
    let mut thresholds: Vec<f64> = items.iter().map(|s| s.score).collect();
    thresholds.push(f64::INFINITY);
    let mut best: Option<((usize, usize), f64)> = None;
    for &theta in &thresholds {
        let fn_ = items.iter().filter(|s| s.reference && s.score < theta).count();
        let fp = items.iter().filter(|s| !s.reference && s.score >= theta).count();
        let (a, b) = (fn_ * n, fp * p);
        let key = (a.abs_diff(b), a + b);
        if best.is_none_or(|(k, _)| key < k) {
            best = Some((key, (fn_ as f64 / p as f64 + fp as f64 / n as f64) / 2.0));
        }
    }
    best.unwrap().1
}

pub fn random_score_set(rng: &mut impl Rng) -> Vec<(f64, bool)> {
    loop {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(2..=60);
        let pairs: Vec<(f64, bool)> = (0..n)
            .map(|_| (rng.random_range(0..levels) as f64 / levels as f64 - 0.3, rng.random_bool(0.4)))
            .collect();
        if pairs.iter().any(|p| p.1) && pairs.iter().any(|p| !p.1) {
            return pairs;
        }
    }
}

/// Positive bags hold one instance near `+center` among distractors near the
/// negatives; negative bags hold instances near `-center`.
pub fn witness_problem(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Bag> {
    let noise = |rng: &mut ChaCha8Rng, c: f64| -> Vec<f64> { (0..dim).map(|_| c + rng.random_range(-0.4..0.4)).collect() };
    let positives = rng.random_range(2..=3);
    let negatives = rng.random_range(2..=6 - positives);
    let mut bags = Vec::new();
    for i in 0..positives {
        let size = rng.random_range(2..=3);
        let witness = rng.random_range(0..size);
        let instances = (0..size)
            .map(|j| if j == witness { noise(rng, 1.5) } else { noise(rng, -1.0) })
            .collect();
        bags.push(Bag { bag_id: format!("p{i}"), instances, label: 1 });
    }
    for i in 0..negatives {
        let size = rng.random_range(1..=3);
        let instances = (0..size).map(|_| noise(rng, -1.5)).collect();
        bags.push(Bag { bag_id: format!("n{i}"), instances, label: -1 });
    }
    bags
}

/// Witness choice minimizing the primal objective over every assignment.
pub fn brute_force_witnesses(bags: &[Bag], a: f64, options: &SvmOptions) -> Vec<usize> {
    let positive: Vec<&Bag> = bags.iter().filter(|b| b.is_positive()).collect();
    let negatives: Vec<Vec<f64>> = bags
        .iter()
        .filter(|b| !b.is_positive())
        .flat_map(|b| b.instances.clone())
        .collect();
    let total: usize = positive.iter().map(|b| b.instances.len()).product();
    let mut best = (f64::INFINITY, Vec::new());
    for code in 0..total {
        let mut rest = code;
        let choice: Vec<usize> = positive
            .iter()
            .map(|b| {
                let j = rest % b.instances.len();
                rest /= b.instances.len();
                j
            })
            .collect();
        let witnesses: Vec<Vec<f64>> = positive.iter().zip(&choice).map(|(b, &j)| b.instances[j].clone()).collect();
        let svm = solve_linear_svm(&witnesses, &negatives, a, options).unwrap();
        let objective = primal_objective(&svm, &witnesses, &negatives);
        if objective < best.0 {
            best = (objective, choice);
        }
    }
    best.1
}
