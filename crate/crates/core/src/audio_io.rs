//! Audio chunks, annotation manifests, fold splits and the synthetic corpus
//! generator.
//!
//! Annotation manifests are plain comma-separated text with one chunk per line,
//! `chunk_id,label_string`, where the label string concatenates tag letters
//! (`x1,cmv`). Fold-assignment files use the same layout with a fold number in
//! place of the label string (`x1,3`). Blank lines and lines starting with `#`
//! are ignored in both.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tags::{TagSet, NUM_TAGS, TAG_LETTERS};

/// Canonical sample rate of the tagging corpus.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;
/// Canonical chunk length in seconds.
pub const CHUNK_SECONDS: f64 = 4.0;
/// Number of cross-validation folds.
pub const NUM_FOLDS: u8 = 5;

/// One mono recording with samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioChunk {
    pub id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioChunk {
    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkLabel {
    pub chunk_id: String,
    pub tags: TagSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    /// 1-based fold number.
    pub fold_index: u8,
    pub train_ids: BTreeSet<String>,
    pub eval_ids: BTreeSet<String>,
}

/// Reads a mono 16-bit PCM WAVE file. The chunk id is the file stem.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioChunk> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    // Once the file is open, any read failure (including early EOF) means a bad header.
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let spec = reader.spec();
    let unsupported = |field, value: String, expected| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        field,
        value,
        expected,
    };
    if spec.channels != 1 {
        return Err(unsupported("channels", spec.channels.to_string(), "1 (mono)"));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported("sample_format", "float".into(), "integer PCM"));
    }
    if spec.bits_per_sample != 16 {
        return Err(unsupported(
            "bits_per_sample",
            spec.bits_per_sample.to_string(),
            "16",
        ));
    }

    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioChunk {
        id,
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Writes a chunk as mono 16-bit PCM. Samples are scaled by 32768, rounded and
/// clamped to the i16 range.
pub fn write_wav(path: impl AsRef<Path>, chunk: &AudioChunk) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: chunk.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in &chunk.samples {
        writer.write_sample(quantize(s)).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

fn quantize(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
}

fn split_record(line_no: usize, line: &str) -> Result<(&str, &str)> {
    let (id, rest) = line.split_once(',').ok_or_else(|| Error::Parse {
        line: line_no,
        message: format!("expected `chunk_id,value`, got `{line}`"),
    })?;
    let id = id.trim();
    if id.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            message: "empty chunk id".into(),
        });
    }
    Ok((id, rest.trim()))
}

/// Parses annotation manifest text.
pub fn parse_annotations(text: &str) -> Result<Vec<ChunkLabel>> {
    let mut seen = HashSet::new();
    let mut labels = Vec::new();
    for (line_no, line) in content_lines(text) {
        let (id, label) = split_record(line_no, line)?;
        let tags = TagSet::parse(label).map_err(|letter| Error::Parse {
            line: line_no,
            message: format!(
                "unknown tag `{letter}` (alphabet is {})",
                TAG_LETTERS.iter().collect::<String>()
            ),
        })?;
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateEntry {
                chunk_id: id.to_string(),
                line: line_no,
            });
        }
        labels.push(ChunkLabel {
            chunk_id: id.to_string(),
            tags,
        });
    }
    Ok(labels)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<ChunkLabel>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text)
}

pub fn format_annotations(labels: &[ChunkLabel]) -> String {
    labels
        .iter()
        .map(|l| format!("{},{}\n", l.chunk_id, l.tags))
        .collect()
}

/// Parses fold-assignment text into `(chunk_id, fold)` pairs. Folds must lie
/// in `1..=NUM_FOLDS`. Repeated ids are kept; [`split_folds`] resolves them.
pub fn parse_fold_assignments(text: &str) -> Result<Vec<(String, u8)>> {
    content_lines(text)
        .map(|(line_no, line)| {
            let (id, fold) = split_record(line_no, line)?;
            let fold: u8 = fold.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("fold `{fold}` is not an integer"),
            })?;
            if !(1..=NUM_FOLDS).contains(&fold) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("fold {fold} outside 1..={NUM_FOLDS}"),
                });
            }
            Ok((id.to_string(), fold))
        })
        .collect()
}

pub fn load_fold_assignments(path: impl AsRef<Path>) -> Result<Vec<(String, u8)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fold_assignments(&text)
}

/// Builds the five train/eval partitions. Chunks without an assignment are
/// training material for every fold.
pub fn split_folds(labels: &[ChunkLabel], assignments: &[(String, u8)]) -> Result<Vec<FoldSplit>> {
    let known: BTreeSet<&str> = labels.iter().map(|l| l.chunk_id.as_str()).collect();
    let mut fold_of: BTreeMap<&str, u8> = BTreeMap::new();
    for (id, fold) in assignments {
        if !known.contains(id.as_str()) {
            return Err(Error::UnknownChunk(id.clone()));
        }
        if let Some(&previous) = fold_of.get(id.as_str()) {
            if previous != *fold {
                return Err(Error::FoldConflict {
                    chunk_id: id.clone(),
                    first: previous,
                    second: *fold,
                });
            }
        }
        fold_of.insert(id, *fold);
    }

    Ok((1..=NUM_FOLDS)
        .map(|fold_index| {
            let (eval_ids, train_ids) = known
                .iter()
                .map(|id| id.to_string())
                .partition(|id| fold_of.get(id.as_str()) == Some(&fold_index));
            FoldSplit {
                fold_index,
                train_ids,
                eval_ids,
            }
        })
        .collect())
}

/// Assigns chunk `i` to fold `i % NUM_FOLDS + 1`.
pub fn round_robin_folds(labels: &[ChunkLabel]) -> Vec<(String, u8)> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.chunk_id.clone(), (i % NUM_FOLDS as usize) as u8 + 1))
        .collect()
}

pub fn format_fold_assignments(assignments: &[(String, u8)]) -> String {
    assignments
        .iter()
        .map(|(id, fold)| format!("{id},{fold}\n"))
        .collect()
}

/// Generator settings for the synthetic corpus.
///
/// Each tag is a sinusoid at its own frequency, switched on over a random
/// sub-interval of the chunk, mixed over white background noise whose level
/// varies per chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_chunks: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Probability that each tag is active in a chunk.
    pub tag_probability: [f64; NUM_TAGS],
    pub tag_frequency_hz: [f64; NUM_TAGS],
    /// Peak event amplitude; each event draws uniformly from [0.5, 1] times this.
    pub event_amplitude: f64,
    /// Shortest event duration in seconds.
    pub min_event_s: f64,
    /// Background noise standard deviation; each chunk draws from [0.5, 1.5] times this.
    pub noise_level: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut tag_frequency_hz = [0.0; NUM_TAGS];
        for (i, f) in tag_frequency_hz.iter_mut().enumerate() {
            *f = 300.0 * (i + 1) as f64;
        }
        SynthConfig {
            num_chunks: 500,
            sample_rate: CANONICAL_SAMPLE_RATE,
            duration_s: CHUNK_SECONDS,
            tag_probability: [0.3; NUM_TAGS],
            tag_frequency_hz,
            event_amplitude: 0.2,
            min_event_s: 1.0,
            noise_level: 0.02,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, &p) in self.tag_probability.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "activation probability for tag `{}` is {p}, outside [0, 1]",
                    TAG_LETTERS[i]
                )));
            }
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.tag_frequency_hz.iter().any(|&f| !(f > 0.0 && f < nyquist)) {
            return Err(Error::Config(format!(
                "tag frequencies must lie in (0, {nyquist}) Hz"
            )));
        }
        if self.sample_rate == 0 || self.duration_s <= 0.0 {
            return Err(Error::Config("sample rate and duration must be positive".into()));
        }
        if !(self.min_event_s > 0.0 && self.min_event_s <= self.duration_s) {
            return Err(Error::Config(format!(
                "min_event_s must lie in (0, {}]",
                self.duration_s
            )));
        }
        if self.noise_level < 0.0 || self.event_amplitude < 0.0 {
            return Err(Error::Config("amplitudes must be non-negative".into()));
        }
        Ok(())
    }
}

/// Deterministically generates a labeled corpus. Chunk `i` depends only on
/// `(config, seed, i)`.
pub fn synthesize_corpus(config: &SynthConfig, seed: u64) -> Result<(Vec<AudioChunk>, Vec<ChunkLabel>)> {
    config.validate()?;
    let num_samples = (config.duration_s * config.sample_rate as f64).round() as usize;
    let rate = config.sample_rate as f64;
    let ramp = ((0.01 * rate) as usize).max(1);

    let mut chunks = Vec::with_capacity(config.num_chunks);
    let mut labels = Vec::with_capacity(config.num_chunks);
    for index in 0..config.num_chunks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let id = format!("synth_{index:04}");

        // `random::<f64>()` lies in [0, 1), so p = 0 never fires and p = 1 always does.
        let tags = TagSet::from_indices(
            (0..NUM_TAGS).filter(|&i| rng.random::<f64>() < config.tag_probability[i]),
        );

        let noise_std = config.noise_level * rng.random_range(0.5..1.5);
        let mut samples: Vec<f64> = if noise_std > 0.0 {
            let normal = Normal::new(0.0, noise_std).expect("finite positive std");
            (0..num_samples).map(|_| normal.sample(&mut rng)).collect()
        } else {
            vec![0.0; num_samples]
        };

        for tag in tags.indices() {
            let amplitude = config.event_amplitude * rng.random_range(0.5..=1.0);
            let length_s = rng.random_range(config.min_event_s..=config.duration_s);
            let start_s = rng.random_range(0.0..=(config.duration_s - length_s));
            let phase = rng.random_range(0.0..TAU);
            let start = (start_s * rate) as usize;
            let end = ((start_s + length_s) * rate).min(num_samples as f64) as usize;
            let omega = TAU * config.tag_frequency_hz[tag] / rate;
            for (n, sample) in samples.iter_mut().enumerate().take(end).skip(start) {
                let edge = (n - start).min(end - 1 - n);
                let gain = if edge < ramp { edge as f64 / ramp as f64 } else { 1.0 };
                *sample += amplitude * gain * (omega * n as f64 + phase).sin();
            }
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }

        chunks.push(AudioChunk {
            id: id.clone(),
            samples,
            sample_rate: config.sample_rate,
        });
        labels.push(ChunkLabel { chunk_id: id, tags });
    }
    Ok((chunks, labels))
}

/// Writes a corpus as `<dir>/audio/<id>.wav`, `<dir>/labels.csv` and a
/// round-robin `<dir>/folds.csv`.
pub fn write_corpus(dir: impl AsRef<Path>, chunks: &[AudioChunk], labels: &[ChunkLabel]) -> Result<()> {
    let dir = dir.as_ref();
    let audio_dir = dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    for chunk in chunks {
        write_wav(audio_dir.join(format!("{}.wav", chunk.id)), chunk)?;
    }
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, format_annotations(labels)).map_err(|e| Error::io(&labels_path, e))?;
    let folds_path = dir.join("folds.csv");
    fs::write(&folds_path, format_fold_assignments(&round_robin_folds(labels)))
        .map_err(|e| Error::io(&folds_path, e))?;
    Ok(())
}
