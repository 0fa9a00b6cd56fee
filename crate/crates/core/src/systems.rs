//! The three tagging systems as trainable, serializable models.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioChunk;
use crate::config::{MisvmConfig, RunConfig};
use crate::dnn::{self, MlpParams, TrainReport, TrainingSet};
use crate::error::{Error, Result};
use crate::features::{
    extract_features, fit_normalizer, network_inputs, normalize, FeatureMatrix, MfccConfig, NormStats,
};
use crate::gmm::{self, GmmConfig, GmmTagModel};
use crate::misvm::{self, Bag, LinearSvm, SvmOptions};
use crate::tags::{TagSet, TagVector, NUM_TAGS, TAG_LETTERS};

pub const MODEL_FORMAT: &str = "audiotag-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Dnn,
    Gmm,
    Misvm,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [SystemKind::Dnn, SystemKind::Gmm, SystemKind::Misvm];

    /// Whether the system reads the coarse (network) framing rather than the fine one.
    pub fn uses_coarse_features(self) -> bool {
        self == SystemKind::Dnn
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Dnn => "dnn",
            SystemKind::Gmm => "gmm",
            SystemKind::Misvm => "misvm",
        })
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dnn" => Ok(SystemKind::Dnn),
            "gmm" => Ok(SystemKind::Gmm),
            "misvm" | "mi-svm" => Ok(SystemKind::Misvm),
            other => Err(Error::Config(format!("unknown system `{other}` (expected dnn, gmm or misvm)"))),
        }
    }
}

/// splitmix64 over the parts, so every (fold, tag, ...) gets its own stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base;
    for &p in parts {
        state ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

/// How a model's input features are computed from audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub mfcc: MfccConfig,
}

impl FeatureSpec {
    pub fn coarse(config: &RunConfig) -> Self {
        FeatureSpec {
            window_ms: config.features.dnn_window_ms,
            hop_ms: config.features.dnn_hop_ms,
            mfcc: config.features.mfcc.clone(),
        }
    }

    pub fn fine(config: &RunConfig) -> Self {
        FeatureSpec {
            window_ms: config.features.fine_window_ms,
            hop_ms: config.features.fine_hop_ms,
            mfcc: config.features.mfcc.clone(),
        }
    }

    pub fn for_system(kind: SystemKind, config: &RunConfig) -> Self {
        if kind.uses_coarse_features() {
            Self::coarse(config)
        } else {
            Self::fine(config)
        }
    }

    pub fn extract(&self, chunk: &AudioChunk) -> Result<FeatureMatrix> {
        extract_features(chunk, self.window_ms, self.hop_ms, &self.mfcc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnModel {
    pub features: FeatureSpec,
    pub norm: NormStats,
    pub noise_frames: usize,
    pub context_width: usize,
    pub dropout_input: f64,
    pub dropout_hidden: f64,
    /// Already discounted for dropout; used as-is at inference.
    pub params: MlpParams,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub features: FeatureSpec,
    pub norm: NormStats,
    pub tags: Vec<GmmTagModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisvmTagModel {
    pub tag: char,
    pub svm: LinearSvm,
    pub converged: bool,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisvmModel {
    pub features: FeatureSpec,
    pub norm: NormStats,
    pub instance_window_ms: f64,
    pub instance_hop_ms: f64,
    pub tags: Vec<MisvmTagModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemModel {
    Dnn(DnnModel),
    Gmm(GmmModel),
    Misvm(MisvmModel),
}

fn stack(parts: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    concatenate(Axis(0), &views).expect("equal widths")
}

fn check_lengths(features: &[&FeatureMatrix], labels: &[TagSet]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::Shape {
            expected: features.len(),
            actual: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("no training chunks".into()));
    }
    Ok(())
}

pub fn train_dnn(features: &[&FeatureMatrix], labels: &[TagSet], config: &RunConfig, seed: u64) -> Result<DnnModel> {
    check_lengths(features, labels)?;
    let fc = &config.features;
    let norm = fit_normalizer(features.iter().copied())?;
    let mut inputs = Vec::with_capacity(features.len());
    let mut targets = Vec::with_capacity(features.len());
    for (f, label) in features.iter().zip(labels) {
        let x = network_inputs(f, &norm, fc.noise_frames, fc.context_width)?;
        let t = label.to_vector();
        targets.push(Array2::from_shape_fn((x.nrows(), NUM_TAGS), |(_, k)| t[k]));
        inputs.push(x);
    }
    let set = TrainingSet {
        inputs: stack(&inputs),
        targets: stack(&targets),
    };
    drop(inputs);
    let train_config = dnn::TrainConfig {
        seed,
        ..config.dnn.clone()
    };
    let (raw, report) = dnn::train(&set, &train_config)?;
    Ok(DnnModel {
        features: FeatureSpec::coarse(config),
        norm,
        noise_frames: fc.noise_frames,
        context_width: fc.context_width,
        dropout_input: train_config.dropout_input,
        dropout_hidden: train_config.dropout_hidden,
        params: dnn::scale_for_inference(&raw, train_config.dropout_input, train_config.dropout_hidden),
        report,
    })
}

fn normalized_corpus(features: &[&FeatureMatrix]) -> Result<(NormStats, Vec<FeatureMatrix>)> {
    let norm = fit_normalizer(features.iter().copied())?;
    let normalized = features.iter().map(|f| normalize(f, &norm)).collect();
    Ok((norm, normalized))
}

pub fn train_gmm(features: &[&FeatureMatrix], labels: &[TagSet], config: &RunConfig, seed: u64) -> Result<GmmModel> {
    check_lengths(features, labels)?;
    let (norm, corpus) = normalized_corpus(features)?;
    let gmm_config: &GmmConfig = &config.gmm;
    let tags = (0..NUM_TAGS)
        .into_par_iter()
        .map(|t| gmm::train_tag_models(&corpus, labels, t, gmm_config, derive_seed(seed, &[t as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(GmmModel {
        features: FeatureSpec::fine(config),
        norm,
        tags,
    })
}

fn instances_for(features: &FeatureMatrix, norm: &NormStats, m: &MisvmConfig) -> Result<Vec<Vec<f64>>> {
    misvm::pool_instances(&normalize(features, norm), m.window_ms, m.hop_ms)
}

pub fn train_misvm(features: &[&FeatureMatrix], labels: &[TagSet], config: &RunConfig, seed: u64) -> Result<MisvmModel> {
    check_lengths(features, labels)?;
    let m = &config.misvm;
    let norm = fit_normalizer(features.iter().copied())?;
    let instances = features
        .iter()
        .map(|f| instances_for(f, &norm, m))
        .collect::<Result<Vec<_>>>()?;
    let tags = (0..NUM_TAGS)
        .into_par_iter()
        .map(|t| {
            let letter = TAG_LETTERS[t];
            let bags: Vec<Bag> = features
                .iter()
                .zip(labels)
                .zip(&instances)
                .map(|((f, label), inst)| Bag {
                    bag_id: f.chunk_id.clone(),
                    instances: inst.clone(),
                    label: if label.contains(t) { 1 } else { -1 },
                })
                .collect();
            let side_missing = |positive: bool| !bags.iter().any(|b| b.is_positive() == positive);
            if side_missing(true) || side_missing(false) {
                let side = if side_missing(true) { "positive" } else { "negative" };
                return Err(Error::ClassStarvation { tag: letter, side });
            }
            let options = SvmOptions {
                iterations: m.iterations,
                seed: derive_seed(seed, &[t as u64]),
            };
            let fit = misvm::misvm_train(&bags, m.a, m.max_outer, &options)?;
            Ok(MisvmTagModel {
                tag: letter,
                svm: fit.svm,
                converged: fit.converged,
                outer_iterations: fit.outer_iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MisvmModel {
        features: FeatureSpec::fine(config),
        norm,
        instance_window_ms: m.window_ms,
        instance_hop_ms: m.hop_ms,
        tags,
    })
}

/// Trains `kind` on the given chunks. `features` must use the framing the
/// system expects (see [`SystemKind::uses_coarse_features`]).
pub fn train_system(
    kind: SystemKind,
    features: &[&FeatureMatrix],
    labels: &[TagSet],
    config: &RunConfig,
    seed: u64,
) -> Result<SystemModel> {
    config.validate()?;
    Ok(match kind {
        SystemKind::Dnn => SystemModel::Dnn(train_dnn(features, labels, config, seed)?),
        SystemKind::Gmm => SystemModel::Gmm(train_gmm(features, labels, config, seed)?),
        SystemKind::Misvm => SystemModel::Misvm(train_misvm(features, labels, config, seed)?),
    })
}

fn check_dim(norm: &NormStats, features: &FeatureMatrix) -> Result<()> {
    if features.dim() != norm.mean.len() {
        return Err(Error::Shape {
            expected: norm.mean.len(),
            actual: features.dim(),
        });
    }
    Ok(())
}

impl SystemModel {
    pub fn kind(&self) -> SystemKind {
        match self {
            SystemModel::Dnn(_) => SystemKind::Dnn,
            SystemModel::Gmm(_) => SystemKind::Gmm,
            SystemModel::Misvm(_) => SystemKind::Misvm,
        }
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        match self {
            SystemModel::Dnn(m) => &m.features,
            SystemModel::Gmm(m) => &m.features,
            SystemModel::Misvm(m) => &m.features,
        }
    }

    /// Per-tag scores for one chunk. Higher means more likely present; only the
    /// DNN scores are probabilities.
    pub fn score(&self, features: &FeatureMatrix) -> Result<TagVector> {
        match self {
            SystemModel::Dnn(m) => {
                check_dim(&m.norm, features)?;
                dnn::predict_chunk(&m.params, features, &m.norm, m.noise_frames, m.context_width)
            }
            SystemModel::Gmm(m) => {
                check_dim(&m.norm, features)?;
                let normalized = normalize(features, &m.norm);
                let mut out = [0.0; NUM_TAGS];
                for (o, tag) in out.iter_mut().zip(&m.tags) {
                    *o = gmm::score_chunk(tag, normalized.features.view());
                }
                Ok(TagVector(out))
            }
            SystemModel::Misvm(m) => {
                check_dim(&m.norm, features)?;
                let instances =
                    misvm::pool_instances(&normalize(features, &m.norm), m.instance_window_ms, m.instance_hop_ms)?;
                let mut out = [0.0; NUM_TAGS];
                for (o, tag) in out.iter_mut().zip(&m.tags) {
                    *o = misvm::misvm_score(&tag.svm, &instances);
                }
                Ok(TagVector(out))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let tags_ok = |letters: Vec<char>| letters == TAG_LETTERS;
        match self {
            SystemModel::Dnn(m) => {
                m.params.validate()?;
                if m.params.output_dim() != NUM_TAGS {
                    return Err(Error::Model(format!("network has {} outputs", m.params.output_dim())));
                }
            }
            SystemModel::Gmm(m) => {
                if !tags_ok(m.tags.iter().map(|t| t.tag).collect()) {
                    return Err(Error::Model("gmm tag models are not in bcfmopv order".into()));
                }
                for t in &m.tags {
                    t.positive.validate()?;
                    t.negative.validate()?;
                }
            }
            SystemModel::Misvm(m) => {
                if !tags_ok(m.tags.iter().map(|t| t.tag).collect()) {
                    return Err(Error::Model("mi-svm tag models are not in bcfmopv order".into()));
                }
            }
        }
        Ok(())
    }
}

/// On-disk model container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub system: SystemKind,
    pub tag_order: String,
    pub fold: Option<u8>,
    /// Effective run configuration as dotted key/value pairs.
    pub config: BTreeMap<String, String>,
    pub model: SystemModel,
}

impl ModelFile {
    pub fn new(model: SystemModel, fold: Option<u8>, config: &RunConfig) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            system: model.kind(),
            tag_order: TAG_LETTERS.iter().collect(),
            fold,
            // Worker count changes scheduling only, never the model.
            config: config.to_pairs().into_iter().filter(|(k, _)| k != "workers").collect(),
            model,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string(self).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Model(format!("unreadable model file: {e}")))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                file.format, file.version
            )));
        }
        if file.tag_order != TAG_LETTERS.iter().collect::<String>() {
            return Err(Error::Model(format!("unexpected tag order `{}`", file.tag_order)));
        }
        if file.system != file.model.kind() {
            return Err(Error::Model("system field does not match the stored model".into()));
        }
        file.model.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
