//! Run configuration as flat dotted `key=value` pairs.
//!
//! Defaults reproduce the reference setup. A config file holds one pair per
//! line (`#` starts a comment); later pairs override earlier ones, so flags
//! applied after the file win.

use std::path::Path;

use crate::dnn::{Activation, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{
    MfccConfig, DEFAULT_CONTEXT_WIDTH, DEFAULT_NOISE_FRAMES, DNN_HOP_MS, DNN_WINDOW_MS, FINE_HOP_MS, FINE_WINDOW_MS,
};
use crate::gmm::GmmConfig;
use crate::misvm::{INSTANCE_HOP_MS, INSTANCE_WINDOW_MS};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub mfcc: MfccConfig,
    pub dnn_window_ms: f64,
    pub dnn_hop_ms: f64,
    pub fine_window_ms: f64,
    pub fine_hop_ms: f64,
    pub noise_frames: usize,
    pub context_width: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            mfcc: MfccConfig::default(),
            dnn_window_ms: DNN_WINDOW_MS,
            dnn_hop_ms: DNN_HOP_MS,
            fine_window_ms: FINE_WINDOW_MS,
            fine_hop_ms: FINE_HOP_MS,
            noise_frames: DEFAULT_NOISE_FRAMES,
            context_width: DEFAULT_CONTEXT_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisvmConfig {
    /// Hinge weight A.
    pub a: f64,
    pub max_outer: usize,
    pub iterations: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for MisvmConfig {
    fn default() -> Self {
        MisvmConfig {
            a: 1.0,
            max_outer: 50,
            iterations: 100_000,
            window_ms: INSTANCE_WINDOW_MS,
            hop_ms: INSTANCE_HOP_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub features: FeatureConfig,
    /// `dnn.seed` is not a key; per-fold seeds derive from `seed`.
    pub dnn: TrainConfig,
    pub gmm: GmmConfig,
    pub misvm: MisvmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            features: FeatureConfig::default(),
            dnn: TrainConfig::default(),
            gmm: GmmConfig::default(),
            misvm: MisvmConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str, none: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.trim() == none {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn list_to_string(values: &[usize]) -> String {
    values.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let f = &mut self.features;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "features.pre_emphasis" => f.mfcc.pre_emphasis = parse(key, value)?,
            "features.num_filters" => f.mfcc.num_filters = parse(key, value)?,
            "features.num_coefficients" => f.mfcc.num_coefficients = parse(key, value)?,
            "features.low_hz" => f.mfcc.low_hz = parse(key, value)?,
            "features.high_hz" => f.mfcc.high_hz = parse_optional(key, value, "nyquist")?,
            "features.log_floor" => f.mfcc.log_floor = parse(key, value)?,
            "features.dnn_window_ms" => f.dnn_window_ms = parse(key, value)?,
            "features.dnn_hop_ms" => f.dnn_hop_ms = parse(key, value)?,
            "features.fine_window_ms" => f.fine_window_ms = parse(key, value)?,
            "features.fine_hop_ms" => f.fine_hop_ms = parse(key, value)?,
            "features.noise_frames" => f.noise_frames = parse(key, value)?,
            "features.context_width" => f.context_width = parse(key, value)?,
            "dnn.learning_rate" => self.dnn.learning_rate = parse(key, value)?,
            "dnn.momentum" => self.dnn.momentum = parse(key, value)?,
            "dnn.batch_size" => self.dnn.batch_size = parse(key, value)?,
            "dnn.dropout_input" => self.dnn.dropout_input = parse(key, value)?,
            "dnn.dropout_hidden" => self.dnn.dropout_hidden = parse(key, value)?,
            "dnn.epochs" => self.dnn.epochs = parse(key, value)?,
            "dnn.hidden_activation" => self.dnn.hidden_activation = parse::<Activation>(key, value)?,
            "dnn.hidden_sizes" => {
                self.dnn.hidden_sizes = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "gmm.components" => self.gmm.em.components = parse(key, value)?,
            "gmm.max_iter" => self.gmm.em.max_iter = parse(key, value)?,
            "gmm.tolerance" => self.gmm.em.tolerance = parse(key, value)?,
            "gmm.variance_floor" => self.gmm.em.variance_floor = parse(key, value)?,
            "gmm.kmeans_iter" => self.gmm.em.kmeans_iter = parse(key, value)?,
            "gmm.max_frames" => self.gmm.max_frames = parse_optional(key, value, "all")?,
            "misvm.a" => self.misvm.a = parse(key, value)?,
            "misvm.max_outer" => self.misvm.max_outer = parse(key, value)?,
            "misvm.iterations" => self.misvm.iterations = parse(key, value)?,
            "misvm.window_ms" => self.misvm.window_ms = parse(key, value)?,
            "misvm.hop_ms" => self.misvm.hop_ms = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let f = &self.features;
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("features.pre_emphasis", f.mfcc.pre_emphasis.to_string()),
            ("features.num_filters", f.mfcc.num_filters.to_string()),
            ("features.num_coefficients", f.mfcc.num_coefficients.to_string()),
            ("features.low_hz", f.mfcc.low_hz.to_string()),
            ("features.high_hz", f.mfcc.high_hz.map_or("nyquist".into(), |v| v.to_string())),
            ("features.log_floor", f.mfcc.log_floor.to_string()),
            ("features.dnn_window_ms", f.dnn_window_ms.to_string()),
            ("features.dnn_hop_ms", f.dnn_hop_ms.to_string()),
            ("features.fine_window_ms", f.fine_window_ms.to_string()),
            ("features.fine_hop_ms", f.fine_hop_ms.to_string()),
            ("features.noise_frames", f.noise_frames.to_string()),
            ("features.context_width", f.context_width.to_string()),
            ("dnn.learning_rate", self.dnn.learning_rate.to_string()),
            ("dnn.momentum", self.dnn.momentum.to_string()),
            ("dnn.batch_size", self.dnn.batch_size.to_string()),
            ("dnn.dropout_input", self.dnn.dropout_input.to_string()),
            ("dnn.dropout_hidden", self.dnn.dropout_hidden.to_string()),
            ("dnn.epochs", self.dnn.epochs.to_string()),
            ("dnn.hidden_activation", self.dnn.hidden_activation.to_string()),
            ("dnn.hidden_sizes", list_to_string(&self.dnn.hidden_sizes)),
            ("gmm.components", self.gmm.em.components.to_string()),
            ("gmm.max_iter", self.gmm.em.max_iter.to_string()),
            ("gmm.tolerance", self.gmm.em.tolerance.to_string()),
            ("gmm.variance_floor", self.gmm.em.variance_floor.to_string()),
            ("gmm.kmeans_iter", self.gmm.em.kmeans_iter.to_string()),
            ("gmm.max_frames", self.gmm.max_frames.map_or("all".into(), |v| v.to_string())),
            ("misvm.a", self.misvm.a.to_string()),
            ("misvm.max_outer", self.misvm.max_outer.to_string()),
            ("misvm.iterations", self.misvm.iterations.to_string()),
            ("misvm.window_ms", self.misvm.window_ms.to_string()),
            ("misvm.hop_ms", self.misvm.hop_ms.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    /// Applies `key=value` overrides such as those given on the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        let pairs = overrides
            .iter()
            .map(|s| {
                s.split_once('=')
                    .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.apply_pairs(pairs)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            pairs.push((k, v));
        }
        self.apply_pairs(pairs)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.dnn.validate()?;
        let f = &self.features;
        if f.context_width % 2 == 0 || f.context_width == 0 {
            return Err(Error::Config(format!("context width must be odd, got {}", f.context_width)));
        }
        if f.noise_frames == 0 {
            return Err(Error::Config("noise estimate needs at least one frame".into()));
        }
        let em = &self.gmm.em;
        if em.components == 0 || em.max_iter == 0 || !(em.variance_floor > 0.0) {
            return Err(Error::Config("gmm needs components >= 1, max_iter >= 1 and a positive variance floor".into()));
        }
        let m = &self.misvm;
        if !(m.a >= 0.0) || m.max_outer == 0 || m.iterations == 0 {
            return Err(Error::Config("misvm needs a >= 0, max_outer >= 1 and iterations >= 1".into()));
        }
        Ok(())
    }
}
