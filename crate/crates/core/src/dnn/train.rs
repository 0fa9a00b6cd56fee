use log::info;
use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    backprop_into, forward_batch, init_mlp, mmse_loss, Activation, DropoutMasks, Gradients, MlpParams, Mode,
    CANONICAL_HIDDEN,
};
use crate::error::{Error, Result};
use crate::features::{network_inputs, FeatureMatrix, NormStats};
use crate::tags::{TagVector, NUM_TAGS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    pub epochs: usize,
    pub hidden_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            momentum: 0.9,
            batch_size: 3,
            dropout_input: 0.1,
            dropout_hidden: 0.2,
            epochs: 30,
            hidden_sizes: CANONICAL_HIDDEN.to_vec(),
            hidden_activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("mini-batch size must be at least 1".into()));
        }
        for (name, rho) in [("input", self.dropout_input), ("hidden", self.dropout_hidden)] {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Config(format!("{name} dropout rate must lie in [0, 1), got {rho}")));
            }
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layers must have at least one unit".into()));
        }
        if self.hidden_sizes.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(format!(
                "hidden sizes {:?} are not a pyramid (non-increasing)",
                self.hidden_sizes
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, input_dim: usize, output_dim: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden_sizes);
        sizes.push(output_dim);
        sizes
    }
}

/// Training windows (rows) and their reference tag vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Inference-mode loss of the initial parameters over the whole set.
    pub initial_loss: f64,
    /// Mean mini-batch loss (dropout active) for each epoch.
    pub epoch_losses: Vec<f64>,
    /// Inference-mode loss of the trained parameters over the whole set.
    pub final_loss: f64,
}

/// Classical momentum: `v ← μ·v − λ·g`, then `θ ← θ + v`.
pub fn sgd_momentum_step(
    params: &mut MlpParams,
    grads: &Gradients,
    velocity: &mut Gradients,
    learning_rate: f64,
    momentum: f64,
) {
    let update = |p: &mut f64, v: &mut f64, &g: &f64| {
        *v = momentum * *v - learning_rate * g;
        *p += *v;
    };
    for l in 0..params.num_layers() {
        Zip::from(&mut params.weights[l])
            .and(&mut velocity.weights[l])
            .and(&grads.weights[l])
            .for_each(update);
        Zip::from(&mut params.biases[l])
            .and(&mut velocity.biases[l])
            .and(&grads.biases[l])
            .for_each(update);
    }
}

/// Discounts weights fed by dropped-out units: first layer by `1 − rho_input`,
/// later layers by `1 − rho_hidden`. Biases are unchanged.
pub fn scale_for_inference(params: &MlpParams, rho_input: f64, rho_hidden: f64) -> MlpParams {
    let mut scaled = params.clone();
    for (l, w) in scaled.weights.iter_mut().enumerate() {
        let keep = if l == 0 { 1.0 - rho_input } else { 1.0 - rho_hidden };
        if keep != 1.0 {
            w.mapv_inplace(|v| v * keep);
        }
    }
    scaled
}

fn dataset_loss(params: &MlpParams, set: &TrainingSet) -> Result<f64> {
    const BLOCK: usize = 256;
    let mut total = 0.0;
    for start in (0..set.len()).step_by(BLOCK) {
        let end = (start + BLOCK).min(set.len());
        let acts = forward_batch(params, set.inputs.slice(ndarray::s![start..end, ..]), Mode::Inference)?;
        let rows = (end - start) as f64;
        total += rows * mmse_loss(acts.output.view(), set.targets.slice(ndarray::s![start..end, ..]))?;
    }
    Ok(total / set.len() as f64)
}

/// Mini-batch SGD with momentum and dropout. Returns the raw (undiscounted)
/// parameters; apply [`scale_for_inference`] before decoding.
pub fn train(set: &TrainingSet, config: &TrainConfig) -> Result<(MlpParams, TrainReport)> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::EmptyInput("training set has no windows".into()));
    }
    if set.targets.nrows() != set.len() {
        return Err(Error::Shape {
            expected: set.len(),
            actual: set.targets.nrows(),
        });
    }
    let sizes = config.layer_sizes(set.inputs.ncols(), set.targets.ncols());
    let mut params = init_mlp(&sizes, config.seed)?.with_hidden_activation(config.hidden_activation);
    let initial_loss = dataset_loss(&scale_for_inference(&params, config.dropout_input, config.dropout_hidden), set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut grads = Gradients::zeros_like(&params);
    let mut velocity = Gradients::zeros_like(&params);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let inputs = set.inputs.select(Axis(0), batch);
            let targets = set.targets.select(Axis(0), batch);
            let masks = DropoutMasks::sample(&params, batch.len(), config.dropout_input, config.dropout_hidden, &mut rng);
            loss_sum += backprop_into(&params, inputs.view(), targets.view(), Some(&masks), &mut grads)?;
            sgd_momentum_step(&mut params, &grads, &mut velocity, config.learning_rate, config.momentum);
            batches += 1;
        }
        let epoch_loss = loss_sum / batches as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Model(format!("training diverged at epoch {}", epoch + 1)));
        }
        info!("dnn epoch {}/{}: loss {:.6}", epoch + 1, config.epochs, epoch_loss);
        epoch_losses.push(epoch_loss);
    }

    let final_loss = dataset_loss(&scale_for_inference(&params, config.dropout_input, config.dropout_hidden), set)?;
    Ok((
        params,
        TrainReport {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}

/// Per-tag arithmetic mean of window outputs `(windows × 7)`.
pub fn mean_window_outputs(outputs: ArrayView2<f64>) -> Result<TagVector> {
    if outputs.ncols() != NUM_TAGS {
        return Err(Error::Shape {
            expected: NUM_TAGS,
            actual: outputs.ncols(),
        });
    }
    if outputs.nrows() == 0 {
        return Err(Error::EmptyInput("no window outputs to aggregate".into()));
    }
    let mean = outputs.mean_axis(Axis(0)).expect("nonempty");
    let mut values = [0.0; NUM_TAGS];
    values.copy_from_slice(mean.as_slice().expect("contiguous"));
    Ok(TagVector(values))
}

/// Chunk-level tag probabilities from inference-scaled parameters: normalize,
/// estimate noise from the first `noise_frames` rows, build every context
/// window and average the outputs.
pub fn predict_chunk(
    params: &MlpParams,
    features: &FeatureMatrix,
    stats: &NormStats,
    noise_frames: usize,
    context_width: usize,
) -> Result<TagVector> {
    let inputs = network_inputs(features, stats, noise_frames, context_width)?;
    let acts = forward_batch(params, inputs.view(), Mode::Inference)?;
    mean_window_outputs(acts.output.view())
}
