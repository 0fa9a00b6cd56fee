//! Five-fold train/score/EER runs over an extracted corpus.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::audio_io::{AudioChunk, ChunkLabel, FoldSplit};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{aggregate, compute_eer, det_points, DetPoint, EvalReport, ScoredChunk};
use crate::features::FeatureMatrix;
use crate::systems::{derive_seed, train_system, FeatureSpec, ModelFile, SystemKind};
use crate::tags::{TagSet, NUM_TAGS, TAG_LETTERS};

/// Labeled chunks with features at both framings, in label order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub labels: Vec<ChunkLabel>,
    pub coarse: Vec<FeatureMatrix>,
    pub fine: Vec<FeatureMatrix>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(labels: Vec<ChunkLabel>, coarse: Vec<FeatureMatrix>, fine: Vec<FeatureMatrix>) -> Result<Self> {
        if coarse.len() != labels.len() || fine.len() != labels.len() {
            return Err(Error::Shape {
                expected: labels.len(),
                actual: coarse.len().min(fine.len()),
            });
        }
        for ((label, c), f) in labels.iter().zip(&coarse).zip(&fine) {
            if c.chunk_id != label.chunk_id || f.chunk_id != label.chunk_id {
                return Err(Error::UnknownChunk(format!(
                    "features for `{}`/`{}` stored under label `{}`",
                    c.chunk_id, f.chunk_id, label.chunk_id
                )));
            }
        }
        let index = labels.iter().enumerate().map(|(i, l)| (l.chunk_id.clone(), i)).collect();
        Ok(Corpus {
            labels,
            coarse,
            fine,
            index,
        })
    }

    /// Extracts both framings for every labeled chunk.
    pub fn from_audio(chunks: &[AudioChunk], labels: &[ChunkLabel], config: &RunConfig) -> Result<Self> {
        let by_id: HashMap<&str, &AudioChunk> = chunks.iter().map(|c| (c.id.as_str(), c)).collect();
        let coarse_spec = FeatureSpec::coarse(config);
        let fine_spec = FeatureSpec::fine(config);
        let extracted = labels
            .par_iter()
            .map(|label| {
                let chunk = by_id
                    .get(label.chunk_id.as_str())
                    .ok_or_else(|| Error::UnknownChunk(label.chunk_id.clone()))?;
                Ok((coarse_spec.extract(chunk)?, fine_spec.extract(chunk)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (coarse, fine) = extracted.into_iter().unzip();
        Corpus::new(labels.to_vec(), coarse, fine)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, chunk_id: &str) -> Option<usize> {
        self.index.get(chunk_id).copied()
    }

    pub fn features(&self, kind: SystemKind) -> &[FeatureMatrix] {
        if kind.uses_coarse_features() {
            &self.coarse
        } else {
            &self.fine
        }
    }

    fn positions<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Result<Vec<usize>> {
        ids.into_iter()
            .map(|id| self.position(id).ok_or_else(|| Error::UnknownChunk(id.clone())))
            .collect()
    }
}

pub fn fold_seed(config: &RunConfig, fold: u8) -> u64 {
    derive_seed(config.seed, &[u64::from(fold)])
}

/// Trains one system on a fold's training chunks.
pub fn train_fold(kind: SystemKind, corpus: &Corpus, split: &FoldSplit, config: &RunConfig) -> Result<ModelFile> {
    let train = corpus.positions(&split.train_ids)?;
    let all = corpus.features(kind);
    let features: Vec<&FeatureMatrix> = train.iter().map(|&i| &all[i]).collect();
    let labels: Vec<TagSet> = train.iter().map(|&i| corpus.labels[i].tags).collect();
    log::info!(
        "fold {}: training {kind} on {} chunks",
        split.fold_index,
        features.len()
    );
    let model = train_system(kind, &features, &labels, config, fold_seed(config, split.fold_index))?;
    Ok(ModelFile::new(model, Some(split.fold_index), config))
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: u8,
    pub model: ModelFile,
    /// Scores of the fold's evaluation chunks, one list per tag.
    pub scored: Vec<Vec<ScoredChunk>>,
}

pub fn score_chunks(model: &ModelFile, corpus: &Corpus, positions: &[usize]) -> Result<Vec<Vec<ScoredChunk>>> {
    let all = corpus.features(model.system);
    let mut scored = vec![Vec::with_capacity(positions.len()); NUM_TAGS];
    for &i in positions {
        let scores = model.model.score(&all[i])?;
        let label = &corpus.labels[i];
        for (t, list) in scored.iter_mut().enumerate() {
            list.push(ScoredChunk {
                chunk_id: label.chunk_id.clone(),
                tag: TAG_LETTERS[t],
                score: scores[t],
                reference: label.tags.contains(t),
            });
        }
    }
    Ok(scored)
}

pub fn run_fold(kind: SystemKind, corpus: &Corpus, split: &FoldSplit, config: &RunConfig) -> Result<FoldOutcome> {
    let model = train_fold(kind, corpus, split, config)?;
    let eval = corpus.positions(&split.eval_ids)?;
    let scored = score_chunks(&model, corpus, &eval)?;
    Ok(FoldOutcome {
        fold: split.fold_index,
        model,
        scored,
    })
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: EvalReport,
    pub folds: Vec<FoldOutcome>,
}

impl Experiment {
    /// DET curves as `(tag, fold, points)`.
    pub fn det_curves(&self) -> Result<Vec<(char, usize, Vec<DetPoint>)>> {
        let mut curves = Vec::new();
        for t in 0..NUM_TAGS {
            for fold in &self.folds {
                curves.push((TAG_LETTERS[t], usize::from(fold.fold), det_points(&fold.scored[t])?));
            }
        }
        Ok(curves)
    }
}

/// Per-tag, per-fold EER matrix from scored folds.
pub fn report_from_folds(system: &str, folds: &[FoldOutcome]) -> Result<EvalReport> {
    let mut cells = [[None; 5]; NUM_TAGS];
    for fold in folds {
        let k = usize::from(fold.fold)
            .checked_sub(1)
            .filter(|&k| k < 5)
            .ok_or_else(|| Error::Bounds(format!("fold index {} outside 1..5", fold.fold)))?;
        for t in 0..NUM_TAGS {
            let eer = compute_eer(&fold.scored[t]).map_err(|e| {
                Error::UndefinedMetric(format!("tag {} in fold {}: {e}", TAG_LETTERS[t], fold.fold))
            })?;
            cells[t][k] = Some(eer);
        }
    }
    aggregate(system, &cells)
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Trains and scores every fold, then aggregates the EERs. Results do not
/// depend on the worker count.
pub fn run_experiment(kind: SystemKind, corpus: &Corpus, splits: &[FoldSplit], config: &RunConfig) -> Result<Experiment> {
    config.validate()?;
    let pool = worker_pool(config.workers)?;
    let folds = pool.install(|| {
        splits
            .par_iter()
            .map(|split| run_fold(kind, corpus, split, config))
            .collect::<Result<Vec<_>>>()
    })?;
    let report = report_from_folds(&kind.to_string(), &folds)?;
    Ok(Experiment { report, folds })
}
