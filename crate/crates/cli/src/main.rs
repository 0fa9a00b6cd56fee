use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use audiotag::audio_io::{
    load_annotations, load_fold_assignments, read_wav, split_folds, synthesize_corpus, write_corpus, ChunkLabel,
    SynthConfig,
};
use audiotag::config::RunConfig;
use audiotag::eval::format_det;
use audiotag::experiment::{run_experiment, train_fold, worker_pool, Corpus};
use audiotag::features::cache::{self, CacheKey, Lookup};
use audiotag::features::FeatureMatrix;
use audiotag::systems::{derive_seed, train_system, FeatureSpec, ModelFile, SystemKind};
use audiotag::TAG_LETTERS;

#[derive(Parser)]
#[command(name = "audiotag", version, about = "Chunk-level audio tagging: features, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Compute and cache MFCC features for every chunk in the manifest.
    Extract(ExtractArgs),
    /// Train one system, on one fold's training split or on every chunk.
    Train(TrainArgs),
    /// Five-fold evaluation of one system.
    Eval(EvalArgs),
    /// Score a single WAV file with a trained model.
    Predict(PredictArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file with one key=value per line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. --set dnn.epochs=10.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for folds and per-tag models.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Comma-separated hidden layer widths, e.g. 1000,500.
    #[arg(long)]
    hidden_sizes: Option<String>,
    /// relu or sigmoid.
    #[arg(long)]
    hidden_activation: Option<String>,
    #[arg(long)]
    gmm_components: Option<usize>,
    /// Cap on frames per GMM class pool, or "all".
    #[arg(long)]
    gmm_max_frames: Option<String>,
    /// MI-SVM hinge weight.
    #[arg(long)]
    misvm_a: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config
                .apply_file(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
        }
        let mut pairs: Vec<String> = Vec::new();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.push(format!("{key}={v}"));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("workers", self.workers.map(|v| v.to_string()));
        push("dnn.epochs", self.epochs.map(|v| v.to_string()));
        push("dnn.learning_rate", self.learning_rate.map(|v| v.to_string()));
        push("dnn.hidden_sizes", self.hidden_sizes.clone());
        push("dnn.hidden_activation", self.hidden_activation.clone());
        push("gmm.components", self.gmm_components.map(|v| v.to_string()));
        push("gmm.max_frames", self.gmm_max_frames.clone());
        push("misvm.a", self.misvm_a.map(|v| v.to_string()));
        pairs.extend(self.set.iter().cloned());
        config.apply_overrides(&pairs)?;
        for (k, v) in config.to_pairs() {
            log::info!("config {k}={v}");
        }
        Ok(config)
    }
}

#[derive(Args)]
struct DataArgs {
    /// Label manifest: one `chunk_id,labels` line per chunk.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory with one `<chunk_id>.wav` per manifest entry; defaults to audio/ beside the manifest.
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    #[arg(long)]
    cache_dir: PathBuf,
    /// Fold assignments (`chunk_id,fold`); defaults to folds.csv beside the manifest.
    #[arg(long)]
    folds: Option<PathBuf>,
}

impl DataArgs {
    fn folds_path(&self) -> PathBuf {
        self.folds.clone().unwrap_or_else(|| {
            self.manifest
                .parent()
                .unwrap_or(Path::new("."))
                .join("folds.csv")
        })
    }

    fn audio_dir(&self) -> PathBuf {
        self.audio_dir
            .clone()
            .unwrap_or_else(|| self.manifest.parent().unwrap_or(Path::new(".")).join("audio"))
    }

    fn labels(&self) -> Result<Vec<ChunkLabel>> {
        if !self.manifest.exists() {
            bail!("label manifest {} does not exist", self.manifest.display());
        }
        Ok(load_annotations(&self.manifest)?)
    }

    fn splits(&self, labels: &[ChunkLabel]) -> Result<Vec<audiotag::audio_io::FoldSplit>> {
        let path = self.folds_path();
        if !path.exists() {
            bail!("fold assignment file {} does not exist (pass --folds)", path.display());
        }
        Ok(split_folds(labels, &load_fold_assignments(&path)?)?)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory; receives audio/, labels.csv and folds.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    chunks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4.0)]
    duration: f64,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// dnn, gmm or misvm.
    #[arg(long)]
    system: SystemKind,
    /// Train on this fold's training split; omit to train on every chunk.
    #[arg(long)]
    fold: Option<u8>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    system: SystemKind,
    /// Evaluate only these folds (repeatable); the report needs all five.
    #[arg(long)]
    fold: Vec<u8>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Report file (JSON); a text table is written beside it with a .txt extension.
    #[arg(long)]
    out: PathBuf,
    /// Optional DET-curve points file.
    #[arg(long)]
    det: Option<PathBuf>,
    /// Optional directory for the per-fold model files.
    #[arg(long)]
    models_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    wav: PathBuf,
}

fn cache_path(cache_dir: &Path, spec: &FeatureSpec, chunk_id: &str) -> PathBuf {
    cache_dir
        .join(format!("{}ms_{}ms", spec.window_ms, spec.hop_ms))
        .join(format!("{chunk_id}.atfc"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        num_chunks: args.chunks,
        duration_s: args.duration,
        ..SynthConfig::default()
    };
    let (chunks, labels) = synthesize_corpus(&config, args.seed)?;
    write_corpus(&args.out, &chunks, &labels)?;
    println!("wrote {} chunks to {}", chunks.len(), args.out.display());
    Ok(())
}

#[derive(Default)]
struct ExtractCounts {
    computed: usize,
    hits: usize,
    repaired: usize,
}

fn extract_chunk(
    id: &str,
    audio_dir: &Path,
    cache_dir: &Path,
    specs: &[FeatureSpec],
    counts: &mut ExtractCounts,
) -> Result<()> {
    let wav = audio_dir.join(format!("{id}.wav"));
    let bytes = std::fs::read(&wav).with_context(|| format!("missing audio file {}", wav.display()))?;
    let mut chunk = None;
    for spec in specs {
        let path = cache_path(cache_dir, spec, id);
        let key = CacheKey::new(&bytes, spec.window_ms, spec.hop_ms, &spec.mfcc);
        match cache::lookup(&path, key) {
            Lookup::Hit(_) => {
                counts.hits += 1;
                continue;
            }
            Lookup::Corrupt(e) => {
                log::warn!("cache record {} is corrupt ({e}); recomputing", path.display());
                counts.repaired += 1;
            }
            Lookup::Stale | Lookup::Missing => {}
        }
        if chunk.is_none() {
            chunk = Some(read_wav(&wav)?);
        }
        let features = spec.extract(chunk.as_ref().expect("just read"))?;
        cache::store(&path, &features, key)?;
        counts.computed += 1;
    }
    Ok(())
}

fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let labels = args.data.labels()?;
    let audio_dir = args.data.audio_dir();
    let audio_dir = audio_dir.as_path();
    let specs = [FeatureSpec::coarse(&config), FeatureSpec::fine(&config)];
    let mut counts = ExtractCounts::default();
    let mut failures = Vec::new();
    for label in &labels {
        if let Err(e) = extract_chunk(&label.chunk_id, audio_dir, &args.data.cache_dir, &specs, &mut counts) {
            failures.push(format!("{}: {e:#}", label.chunk_id));
        }
    }
    println!(
        "{} chunks: {} records computed, {} cache hits, {} corrupt records replaced",
        labels.len(),
        counts.computed,
        counts.hits,
        counts.repaired
    );
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("  {f}");
        }
        bail!("{} of {} chunks failed to extract", failures.len(), labels.len());
    }
    Ok(())
}

fn load_cached(cache_dir: &Path, spec: &FeatureSpec, chunk_id: &str) -> Result<FeatureMatrix> {
    let path = cache_path(cache_dir, spec, chunk_id);
    let bytes = std::fs::read(&path).with_context(|| {
        format!(
            "missing feature cache {} for chunk `{chunk_id}`; run `audiotag extract` first",
            path.display()
        )
    })?;
    let (features, key) = cache::decode_record(&bytes)
        .with_context(|| format!("feature cache {} is unreadable; rerun `audiotag extract`", path.display()))?;
    if key.config_crc != cache::config_fingerprint(spec.window_ms, spec.hop_ms, &spec.mfcc) {
        bail!(
            "feature cache {} was computed with other extraction settings; rerun `audiotag extract`",
            path.display()
        );
    }
    Ok(features)
}

fn load_corpus(data: &DataArgs, labels: Vec<ChunkLabel>, config: &RunConfig) -> Result<Corpus> {
    let coarse_spec = FeatureSpec::coarse(config);
    let fine_spec = FeatureSpec::fine(config);
    let mut coarse = Vec::with_capacity(labels.len());
    let mut fine = Vec::with_capacity(labels.len());
    for label in &labels {
        coarse.push(load_cached(&data.cache_dir, &coarse_spec, &label.chunk_id)?);
        fine.push(load_cached(&data.cache_dir, &fine_spec, &label.chunk_id)?);
    }
    Ok(Corpus::new(labels, coarse, fine)?)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let labels = args.data.labels()?;
    let model = match args.fold {
        Some(fold) => {
            let splits = args.data.splits(&labels)?;
            let split = splits
                .iter()
                .find(|s| s.fold_index == fold)
                .with_context(|| format!("fold {fold} is not in 1..5"))?
                .clone();
            let corpus = load_corpus(&args.data, labels, &config)?;
            let pool = worker_pool(config.workers)?;
            pool.install(|| train_fold(args.system, &corpus, &split, &config))?
        }
        None => {
            let corpus = load_corpus(&args.data, labels, &config)?;
            let features: Vec<&FeatureMatrix> = corpus.features(args.system).iter().collect();
            let tags: Vec<_> = corpus.labels.iter().map(|l| l.tags).collect();
            let pool = worker_pool(config.workers)?;
            let seed = derive_seed(config.seed, &[0]);
            let model = pool.install(|| train_system(args.system, &features, &tags, &config, seed))?;
            ModelFile::new(model, None, &config)
        }
    };
    model.save(&args.out)?;
    println!("wrote {} model to {}", args.system, args.out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let config = args.config.resolve()?;
    let labels = args.data.labels()?;
    let mut splits = args.data.splits(&labels)?;
    if !args.fold.is_empty() {
        splits.retain(|s| args.fold.contains(&s.fold_index));
    }
    let corpus = load_corpus(&args.data, labels, &config)?;
    let experiment = run_experiment(args.system, &corpus, &splits, &config)?;
    let report = &experiment.report;
    let pairs: std::collections::BTreeMap<String, String> = config.to_pairs().into_iter().collect();
    write_file(&args.out, &report.to_json(&pairs))?;
    let table = report.to_table();
    write_file(&args.out.with_extension("txt"), &table)?;
    print!("{table}");
    if let Some(det) = &args.det {
        write_file(det, &format_det(&experiment.det_curves()?))?;
    }
    if let Some(dir) = &args.models_dir {
        for fold in &experiment.folds {
            fold.model
                .save(&dir.join(format!("{}_fold{}.json", args.system, fold.fold)))?;
        }
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    if !args.model.exists() {
        bail!("model file {} does not exist; run `audiotag train` first", args.model.display());
    }
    let file = ModelFile::load(&args.model)?;
    let chunk = read_wav(&args.wav)?;
    let features = file.model.feature_spec().extract(&chunk)?;
    let scores = file.model.score(&features)?;
    for (t, letter) in TAG_LETTERS.iter().enumerate() {
        println!("{letter}\t{}", scores[t]);
    }
    println!("top\t{}", TAG_LETTERS[scores.argmax()]);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
