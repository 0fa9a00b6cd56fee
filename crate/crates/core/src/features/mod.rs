//! Framing, MFCC extraction, background-noise estimation and the stacked
//! context windows fed to the network.

pub mod cache;
mod mfcc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioChunk;
use crate::error::{Error, Result};

pub use mfcc::{compute_mfcc, mel_to_hz, hz_to_mel, MfccConfig, MfccExtractor};

/// Number of cepstral coefficients per frame.
pub const MFCC_DIM: usize = 24;
/// Frames averaged for the background-noise estimate.
pub const DEFAULT_NOISE_FRAMES: usize = 6;
/// Frames stacked into one network input (2τ + 1 with τ = 45).
pub const DEFAULT_CONTEXT_WIDTH: usize = 91;

/// Network-input framing: 80 ms windows, 40 ms hop.
pub const DNN_WINDOW_MS: f64 = 80.0;
pub const DNN_HOP_MS: f64 = 40.0;
/// Baseline framing used by the GMM and MI-SVM systems: 20 ms windows, 10 ms hop.
pub const FINE_WINDOW_MS: f64 = 20.0;
pub const FINE_HOP_MS: f64 = 10.0;

/// Standard-deviation floor used by [`fit_normalizer`].
pub const STD_FLOOR: f64 = 1e-6;

/// Sample-level geometry of a framed signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLayout {
    pub sample_rate: u32,
    /// Window length in samples.
    pub window: usize,
    /// Hop in samples.
    pub hop: usize,
    /// Length of the source signal in samples.
    pub num_samples: usize,
}

impl FrameLayout {
    /// Converts millisecond framing to samples at `sample_rate`.
    pub fn from_ms(sample_rate: u32, window_ms: f64, hop_ms: f64, num_samples: usize) -> Result<Self> {
        if !(hop_ms > 0.0 && window_ms >= hop_ms) {
            return Err(Error::Config(format!(
                "framing requires window_ms >= hop_ms > 0, got {window_ms}/{hop_ms}"
            )));
        }
        let to_samples = |ms: f64| (ms * sample_rate as f64 / 1000.0).round() as usize;
        let (window, hop) = (to_samples(window_ms), to_samples(hop_ms));
        if hop == 0 {
            return Err(Error::Config(format!("hop of {hop_ms} ms is shorter than one sample")));
        }
        Ok(FrameLayout {
            sample_rate,
            window,
            hop,
            num_samples,
        })
    }

    /// Number of complete frames; the trailing partial frame is dropped.
    pub fn frame_count(&self) -> usize {
        if self.num_samples < self.window {
            0
        } else {
            (self.num_samples - self.window) / self.hop + 1
        }
    }

    pub fn window_ms(&self) -> f64 {
        self.window as f64 * 1000.0 / self.sample_rate as f64
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop as f64 * 1000.0 / self.sample_rate as f64
    }
}

/// Overlapping analysis frames of one chunk, one frame per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub chunk_id: String,
    pub frames: Array2<f64>,
    pub layout: FrameLayout,
}

/// Per-frame MFCC vectors of one chunk, one frame per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub chunk_id: String,
    pub features: Array2<f64>,
    pub layout: FrameLayout,
}

impl FeatureMatrix {
    pub fn num_frames(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Splits a chunk into frames; row `t` holds samples `[t·hop, t·hop + window)`.
pub fn frame_signal(chunk: &AudioChunk, window_ms: f64, hop_ms: f64) -> Result<FrameMatrix> {
    let layout = FrameLayout::from_ms(chunk.sample_rate, window_ms, hop_ms, chunk.samples.len())?;
    let count = layout.frame_count();
    if count == 0 {
        return Err(Error::EmptyInput(format!(
            "chunk `{}` has {} samples, fewer than one {}-sample window",
            chunk.id,
            chunk.samples.len(),
            layout.window
        )));
    }
    let frames = Array2::from_shape_fn((count, layout.window), |(t, k)| {
        chunk.samples[t * layout.hop + k]
    });
    Ok(FrameMatrix {
        chunk_id: chunk.id.clone(),
        frames,
        layout,
    })
}

/// Frames a chunk and converts every frame to MFCCs.
pub fn extract_features(
    chunk: &AudioChunk,
    window_ms: f64,
    hop_ms: f64,
    config: &MfccConfig,
) -> Result<FeatureMatrix> {
    let frames = frame_signal(chunk, window_ms, hop_ms)?;
    compute_mfcc(&frames, config)
}

/// Background estimate: mean of the first `frames` feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub z_hat: Vec<f64>,
    pub frames: usize,
}

pub fn estimate_noise(features: &FeatureMatrix, frames: usize) -> Result<NoiseEstimate> {
    let rows = features.num_frames();
    if frames == 0 || frames > rows {
        return Err(Error::Bounds(format!(
            "noise estimate over {frames} frames requested, chunk `{}` has {rows}",
            features.chunk_id
        )));
    }
    let mut z_hat = vec![0.0; features.dim()];
    for row in features.features.rows().into_iter().take(frames) {
        for (acc, &v) in z_hat.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let scale = 1.0 / frames as f64;
    z_hat.iter_mut().for_each(|v| *v *= scale);
    Ok(NoiseEstimate { z_hat, frames })
}

/// Stacked frames `n−τ ..= n+τ` (row-major) followed by the noise estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub values: Vec<f64>,
    pub center_index: usize,
}

/// Input dimensionality of a context window of `width` frames of `dim` coefficients.
pub const fn context_dim(width: usize, dim: usize) -> usize {
    width * dim + dim
}

/// Builds every fully observed window of `width` frames, stride 1.
pub fn build_context_windows(
    features: &FeatureMatrix,
    noise: &NoiseEstimate,
    width: usize,
) -> Result<Vec<ContextWindow>> {
    if width == 0 || width % 2 == 0 {
        return Err(Error::Config(format!("context width must be odd, got {width}")));
    }
    let rows = features.num_frames();
    if width > rows {
        return Err(Error::InsufficientFrames {
            needed: width,
            available: rows,
        });
    }
    let dim = features.dim();
    if noise.z_hat.len() != dim {
        return Err(Error::Shape {
            expected: dim,
            actual: noise.z_hat.len(),
        });
    }
    let half = width / 2;
    Ok((0..=rows - width)
        .map(|start| {
            let mut values = Vec::with_capacity(context_dim(width, dim));
            for row in features.features.slice(ndarray::s![start..start + width, ..]).rows() {
                values.extend(row.iter().copied());
            }
            values.extend_from_slice(&noise.z_hat);
            ContextWindow {
                values,
                center_index: start + half,
            }
        })
        .collect())
}

/// Per-dimension mean and standard deviation over pooled training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits population mean/std over all rows of all matrices; std is floored at [`STD_FLOOR`].
pub fn fit_normalizer<'a>(training: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<NormStats> {
    let matrices: Vec<&FeatureMatrix> = training.into_iter().collect();
    let dim = matrices
        .first()
        .ok_or_else(|| Error::EmptyInput("normalizer needs at least one feature matrix".into()))?
        .dim();
    let mut count = 0usize;
    let mut mean = vec![0.0; dim];
    for m in &matrices {
        if m.dim() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: m.dim(),
            });
        }
        for row in m.features.rows() {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        count += m.num_frames();
    }
    if count == 0 {
        return Err(Error::EmptyInput("normalizer training set has no frames".into()));
    }
    mean.iter_mut().for_each(|v| *v /= count as f64);

    let mut var = vec![0.0; dim];
    for m in &matrices {
        for row in m.features.rows() {
            for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
    }
    let std = var
        .into_iter()
        .map(|v| (v / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

pub fn normalize(features: &FeatureMatrix, stats: &NormStats) -> FeatureMatrix {
    let mut out = features.features.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        for ((v, &mu), &sd) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - mu) / sd;
        }
    }
    FeatureMatrix {
        chunk_id: features.chunk_id.clone(),
        features: out,
        layout: features.layout,
    }
}

/// Normalizes, estimates noise from the first `noise_frames` normalized rows
/// and stacks the windows into a `(windows × dim)` matrix.
pub fn network_inputs(
    features: &FeatureMatrix,
    stats: &NormStats,
    noise_frames: usize,
    width: usize,
) -> Result<Array2<f64>> {
    let normalized = normalize(features, stats);
    let noise = estimate_noise(&normalized, noise_frames)?;
    let windows = build_context_windows(&normalized, &noise, width)?;
    let dim = context_dim(width, normalized.dim());
    let mut out = Array2::zeros((windows.len(), dim));
    for (mut row, window) in out.rows_mut().into_iter().zip(&windows) {
        row.assign(&ndarray::ArrayView1::from(&window.values));
    }
    Ok(out)
}
