//! Pyramid multilayer perceptron trained as a multi-label regressor.
//!
//! Weights are stored `(out × in)` per layer. Hidden layers use the configured
//! [`Activation`]; the output layer is always a sigmoid. Dropout follows the
//! classic recipe: raw Bernoulli keep-masks during training, and a `(1 − ρ)`
//! discount of the affected weights before inference
//! ([`scale_for_inference`]).

mod train;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use train::{
    mean_window_outputs, predict_chunk, scale_for_inference, sgd_momentum_step, train, TrainConfig,
    TrainReport, TrainingSet,
};

/// Hidden units of the canonical pyramid.
pub const CANONICAL_HIDDEN: [usize; 2] = [1000, 500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub hidden_activation: Activation,
}

impl MlpParams {
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn with_hidden_activation(mut self, activation: Activation) -> Self {
        self.hidden_activation = activation;
        self
    }

    /// Checks that matrix shapes chain through `layer_sizes` and all entries are finite.
    pub fn validate(&self) -> Result<()> {
        let layers = self.layer_sizes.len().saturating_sub(1);
        if layers == 0 || self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Model(format!(
                "{} layer sizes with {} weight matrices and {} bias vectors",
                self.layer_sizes.len(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let expected = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            if w.dim() != expected || b.len() != expected.0 {
                return Err(Error::Model(format!(
                    "layer {l}: weights {:?} / bias {} do not match sizes {:?}",
                    w.dim(),
                    b.len(),
                    expected
                )));
            }
            if !w.iter().chain(b.iter()).all(|v| v.is_finite()) {
                return Err(Error::Model(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<MlpParams> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        weights.push(Array2::from_shape_simple_fn((fan_out, fan_in), || {
            rng.random_range(-limit..=limit)
        }));
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpParams {
        layer_sizes: layer_sizes.to_vec(),
        weights,
        biases,
        hidden_activation: Activation::default(),
    })
}

/// Keep-masks for the input of every weight layer, each `(batch × in_dim)` of 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub layers: Vec<Array2<f64>>,
}

impl DropoutMasks {
    /// Input features are dropped with probability `rho_input`, hidden units with `rho_hidden`.
    pub fn sample(params: &MlpParams, batch: usize, rho_input: f64, rho_hidden: f64, rng: &mut impl Rng) -> Self {
        let layers = (0..params.num_layers())
            .map(|l| {
                let rho = if l == 0 { rho_input } else { rho_hidden };
                Array2::from_shape_simple_fn((batch, params.layer_sizes[l]), || {
                    if rho > 0.0 && rng.random::<f64>() < rho {
                        0.0
                    } else {
                        1.0
                    }
                })
            })
            .collect();
        DropoutMasks { layers }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Train(&'a DropoutMasks),
    Inference,
}

/// Everything backprop needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Input of each weight layer after masking, `(batch × in_dim)`.
    pub layer_inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer, `(batch × out_dim)`.
    pub pre_activations: Vec<Array2<f64>>,
    /// Sigmoid outputs, `(batch × output_dim)`.
    pub output: Array2<f64>,
}

/// Batched forward pass; rows of `inputs` are samples.
pub fn forward_batch(params: &MlpParams, inputs: ArrayView2<f64>, mode: Mode<'_>) -> Result<Activations> {
    if inputs.ncols() != params.input_dim() {
        return Err(Error::Shape {
            expected: params.input_dim(),
            actual: inputs.ncols(),
        });
    }
    let batch = inputs.nrows();
    if let Mode::Train(masks) = mode {
        let shapes_ok = masks.layers.len() == params.num_layers()
            && masks
                .layers
                .iter()
                .zip(&params.layer_sizes)
                .all(|(m, &size)| m.dim() == (batch, size));
        if !shapes_ok {
            return Err(Error::Model("dropout masks do not match batch and topology".into()));
        }
    }

    let last = params.num_layers() - 1;
    let mut layer_inputs = Vec::with_capacity(params.num_layers());
    let mut pre_activations = Vec::with_capacity(params.num_layers());
    let mut current = inputs.to_owned();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        if let Mode::Train(masks) = mode {
            current *= &masks.layers[l];
        }
        let mut z = Array2::zeros((batch, w.nrows()));
        general_mat_mul(1.0, &current, &w.t(), 0.0, &mut z);
        z += b;
        let next = if l == last {
            z.mapv(sigmoid)
        } else {
            let act = params.hidden_activation;
            z.mapv(|v| act.apply(v))
        };
        layer_inputs.push(current);
        pre_activations.push(z);
        current = next;
    }
    Ok(Activations {
        layer_inputs,
        pre_activations,
        output: current,
    })
}

/// Single-sample forward pass.
pub fn forward(params: &MlpParams, input: &[f64], mode: Mode<'_>) -> Result<(Array1<f64>, Activations)> {
    let view = ArrayView2::from_shape((1, input.len()), input).expect("row view");
    let acts = forward_batch(params, view, mode)?;
    let out = acts.output.row(0).to_owned();
    Ok((out, acts))
}

/// Mean over the batch of the per-sample squared error summed over outputs.
pub fn mmse_loss(pred: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != reference.dim() {
        return Err(Error::Shape {
            expected: reference.len(),
            actual: pred.len(),
        });
    }
    if pred.nrows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = Zip::from(&pred)
        .and(&reference)
        .fold(0.0, |acc, &p, &r| acc + (p - r) * (p - r));
    Ok(total / pred.nrows() as f64)
}

/// Gradients (or velocities) with the same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Gradients {
            weights: params.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

/// Exact gradients of the batch MMSE loss; masks are treated as constants.
pub fn backprop(
    params: &MlpParams,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    masks: Option<&DropoutMasks>,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(params);
    let loss = backprop_into(params, inputs, targets, masks, &mut grads)?;
    Ok((loss, grads))
}

/// [`backprop`] writing into preallocated buffers. Returns the batch loss.
pub fn backprop_into(
    params: &MlpParams,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    masks: Option<&DropoutMasks>,
    grads: &mut Gradients,
) -> Result<f64> {
    let mode = masks.map_or(Mode::Inference, Mode::Train);
    let acts = forward_batch(params, inputs, mode)?;
    let loss = mmse_loss(acts.output.view(), targets)?;
    let batch = inputs.nrows() as f64;

    // dEr/dy = 2(y − t)/N, through the output sigmoid.
    let mut delta = Zip::from(&acts.output)
        .and(&targets)
        .map_collect(|&y, &t| 2.0 * (y - t) / batch * y * (1.0 - y));

    for l in (0..params.num_layers()).rev() {
        general_mat_mul(1.0, &delta.t(), &acts.layer_inputs[l], 0.0, &mut grads.weights[l]);
        grads.biases[l] = delta.sum_axis(Axis(0));
        if l == 0 {
            break;
        }
        let mut upstream = delta.dot(&params.weights[l]);
        if let Some(m) = masks {
            upstream *= &m.layers[l];
        }
        let act = params.hidden_activation;
        Zip::from(&mut upstream)
            .and(&acts.pre_activations[l - 1])
            .for_each(|g, &z| *g *= act.derivative(z));
        delta = upstream;
    }
    Ok(loss)
}
