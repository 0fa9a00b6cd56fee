use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, FrameMatrix, MFCC_DIM};
use crate::error::{Error, Result};

/// MFCC chain settings. Per frame: pre-emphasis, Hamming window, zero-pad to
/// the next power of two, magnitude spectrum, triangular mel filterbank, log
/// with floor, orthonormal DCT-II, keep the first `num_coefficients`
/// (C0 included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub pre_emphasis: f64,
    pub num_filters: usize,
    pub num_coefficients: usize,
    pub low_hz: f64,
    /// Upper filterbank edge; `None` means the Nyquist frequency.
    pub high_hz: Option<f64>,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            pre_emphasis: 0.97,
            num_filters: 40,
            num_coefficients: MFCC_DIM,
            low_hz: 0.0,
            high_hz: None,
            log_floor: 1e-10,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, filterbank, DCT basis and FFT plan for one frame length.
pub struct MfccExtractor {
    config: MfccConfig,
    frame_len: usize,
    fft_size: usize,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// `num_filters` rows of `fft_size / 2 + 1` weights.
    filterbank: Vec<Vec<f64>>,
    /// `num_coefficients` rows of `num_filters` weights.
    dct: Vec<Vec<f64>>,
    center_hz: Vec<f64>,
}

impl MfccExtractor {
    pub fn new(config: &MfccConfig, sample_rate: u32, frame_len: usize) -> Result<Self> {
        if frame_len == 0 {
            return Err(Error::Config("frame length must be positive".into()));
        }
        if config.num_filters == 0 || config.num_coefficients > config.num_filters {
            return Err(Error::Config(format!(
                "{} coefficients requested from {} filters",
                config.num_coefficients, config.num_filters
            )));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let high_hz = config.high_hz.unwrap_or(nyquist);
        if !(config.low_hz >= 0.0 && config.low_hz < high_hz && high_hz <= nyquist) {
            return Err(Error::Config(format!(
                "filterbank range {}..{high_hz} Hz invalid at {sample_rate} Hz",
                config.low_hz
            )));
        }
        if !(config.log_floor > 0.0) {
            return Err(Error::Config("log floor must be positive".into()));
        }

        let fft_size = frame_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let window = if frame_len == 1 {
            vec![1.0]
        } else {
            (0..frame_len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
                .collect()
        };

        let bins = fft_size / 2 + 1;
        let (low_mel, high_mel) = (hz_to_mel(config.low_hz), hz_to_mel(high_hz));
        let edges: Vec<f64> = (0..config.num_filters + 2)
            .map(|i| mel_to_hz(low_mel + (high_mel - low_mel) * i as f64 / (config.num_filters + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let filterbank = (0..config.num_filters)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let rising = (f - lo) / (center - lo);
                        let falling = (hi - f) / (hi - center);
                        rising.min(falling).max(0.0)
                    })
                    .collect()
            })
            .collect();

        let n = config.num_filters as f64;
        let dct = (0..config.num_coefficients)
            .map(|k| {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                (0..config.num_filters)
                    .map(|j| scale * (PI * k as f64 * (2 * j + 1) as f64 / (2.0 * n)).cos())
                    .collect()
            })
            .collect();

        Ok(MfccExtractor {
            config: config.clone(),
            frame_len,
            fft_size,
            fft,
            window,
            filterbank,
            dct,
            center_hz: edges[1..=config.num_filters].to_vec(),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Center frequency of each mel filter in Hz.
    pub fn filter_centers_hz(&self) -> &[f64] {
        &self.center_hz
    }

    /// Mel filterbank energies (weighted magnitude sums) of one frame, before the log.
    pub fn filterbank_energies(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.frame_len, "frame length mismatch");
        let mut buffer = vec![Complex::new(0.0, 0.0); self.fft_size];
        let alpha = self.config.pre_emphasis;
        for n in 0..self.frame_len {
            let previous = if n == 0 { 0.0 } else { frame[n - 1] };
            let emphasized = frame[n] - alpha * previous;
            buffer[n].re = emphasized * self.window[n];
        }
        self.fft.process(&mut buffer);
        let magnitude: Vec<f64> = buffer[..self.fft_size / 2 + 1].iter().map(|c| c.norm()).collect();
        self.filterbank
            .iter()
            .map(|weights| weights.iter().zip(&magnitude).map(|(w, m)| w * m).sum())
            .collect()
    }

    pub fn coefficients(&self, frame: &[f64]) -> Vec<f64> {
        let log_energies: Vec<f64> = self
            .filterbank_energies(frame)
            .into_iter()
            .map(|e| e.max(self.config.log_floor).ln())
            .collect();
        self.dct
            .iter()
            .map(|basis| basis.iter().zip(&log_energies).map(|(b, e)| b * e).sum())
            .collect()
    }
}

/// Converts every frame of `frames` to MFCCs.
pub fn compute_mfcc(frames: &FrameMatrix, config: &MfccConfig) -> Result<FeatureMatrix> {
    let extractor = MfccExtractor::new(config, frames.layout.sample_rate, frames.frames.ncols())?;
    let rows = frames.frames.nrows();
    let mut features = Array2::zeros((rows, config.num_coefficients));
    for (t, frame) in frames.frames.rows().into_iter().enumerate() {
        let frame = frame.to_vec();
        for (d, c) in extractor.coefficients(&frame).into_iter().enumerate() {
            features[[t, d]] = c;
        }
    }
    Ok(FeatureMatrix {
        chunk_id: frames.chunk_id.clone(),
        features,
        layout: frames.layout,
    })
}
