//! Command-line front end.
//!
//! ```text
//! avsum gen-synth --out data --seed 7
//! avsum train --variant v --manifest data/manifest.json --out run --seed 7
//! avsum train --variant a --manifest data/manifest.json --out run --seed 7
//! avsum train --variant av_gru --manifest data/manifest.json --out run --seed 7
//! avsum cca-split --manifest data/manifest.json --out run/split.json
//! avsum eval --manifest data/manifest.json --checkpoints run/checkpoints \
//!     --split run/split.json --out run/report.tsv
//! ```

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::cca::DEFAULT_EPSILON;
use crate::analysis::report::{build_report, ReportCell, VideoEval};
use crate::analysis::split::{cca_split_videos, CcaSplit};
use crate::data::manifest::{load_dataset, write_dataset, DatasetManifest};
use crate::data::synth::{generate_synthetic, SynthConfig};
use crate::error::{Error, Result};
use crate::models::checkpoint::{self, AnyModel};
use crate::models::{ModelConfig, ModelVariant, Summarizer, UnimodalModel};
use crate::pipeline::{evaluate_fold, fold_seed, train_fold};
use crate::training::train::{DEFAULT_EPOCHS, DEFAULT_PATIENCE, FUSION_LR, UNIMODAL_LR};
use crate::training::{make_folds, Fold, FoldPlan, FoldScheme, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "avsum", version, about = "Audio-visual video summarization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (features, labels, manifest).
    GenSynth(GenSynthArgs),
    /// Train one model variant on every cross-validation fold.
    Train(TrainArgs),
    /// Score videos by audio-visual canonical correlation and split them.
    CcaSplit(CcaSplitArgs),
    /// Evaluate trained checkpoints on their test folds.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub videos: usize,
    #[arg(long, default_value_t = 128)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub audio_window: usize,
    /// Magnitude of the planted audio-visual correlation.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// Number of positively correlated videos (default: alternate signs).
    #[arg(long)]
    pub positive: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Per-video saliency quantile above which frames are key frames.
    #[arg(long, default_value_t = 0.7)]
    pub quantile: f64,
    #[arg(long, default_value = "kfold5")]
    pub fold_scheme: FoldScheme,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// One of v, a, av_gru, av_gru_sc, av_att, av_att_sc.
    #[arg(long)]
    pub variant: ModelVariant,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run directory; checkpoints go to `<out>/checkpoints`, loss logs to
    /// `<out>/logs`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Learning rate (default 1e-3 unimodal, 1e-4 fusion).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long, default_value_t = DEFAULT_PATIENCE)]
    pub patience: usize,
    /// Train up to this many folds concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel_folds: usize,
    /// Convolution channels of unimodal models.
    #[arg(long)]
    pub channels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CcaSplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Relative ridge added to each covariance block.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
    /// Use the audio features of this trained audio checkpoint (path stem)
    /// instead of window-averaged raw embeddings.
    #[arg(long)]
    pub audio_checkpoint: Option<PathBuf>,
    /// Seed recorded in the output (default: the manifest's seed).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Output TSV; provenance goes next to it as `<out>.meta.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated variants (default: every variant with checkpoints).
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<ModelVariant>>,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::State(_) => 2,
        Error::Format { .. } | Error::Io { .. } | Error::Json(_) | Error::Csv(_) | Error::Undefined(_) => 3,
        Error::Numerical(_) => 4,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("AVSUM_LOG", "info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynth(a) => cmd_gen_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::CcaSplit(a) => cmd_cca_split(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

pub fn cmd_gen_synth(args: &GenSynthArgs) -> Result<()> {
    let base = match args.positive {
        Some(p) if p > args.videos => {
            return Err(Error::invalid(format!("--positive {p} exceeds --videos {}", args.videos)));
        }
        Some(p) => SynthConfig::mixed(args.videos, args.rho, p, args.seed),
        None => SynthConfig::balanced(args.videos, args.rho, args.seed),
    };
    let config = SynthConfig {
        frames: args.frames,
        feature_dim: args.feature_dim,
        audio_window: args.audio_window,
        noise: args.noise,
        label_quantile: args.quantile,
        ..base
    };
    let videos = generate_synthetic(&config)?;
    write_dataset(&args.out, &args.name, args.fold_scheme, &videos, Some(args.seed))?;
    info!("wrote {} videos to {}", videos.len(), args.out.display());
    Ok(())
}

fn variant_dir(checkpoints: &Path, variant: ModelVariant) -> PathBuf {
    checkpoints.join(variant.key())
}

fn fold_stem(checkpoints: &Path, variant: ModelVariant, fold: usize) -> PathBuf {
    variant_dir(checkpoints, variant).join(format!("fold{fold}"))
}

/// Writes the run's fold plan, or checks that an existing one matches.
fn ensure_fold_plan(path: &Path, plan: &FoldPlan) -> Result<()> {
    if path.is_file() {
        let existing = FoldPlan::load(path)?;
        if &existing != plan {
            return Err(Error::State(format!(
                "{} was written for another dataset or seed; use a fresh --out",
                path.display()
            )));
        }
        return Ok(());
    }
    plan.save(path)
}

fn load_unimodal(stem: &Path, variant: ModelVariant) -> Result<UnimodalModel<f32>> {
    let m = UnimodalModel::<f32>::load(stem)?;
    if m.variant() != variant {
        return Err(Error::State(format!(
            "{} holds a {} model, expected {variant}",
            stem.display(),
            m.variant()
        )));
    }
    Ok(m)
}

fn train_one_fold(
    args: &TrainArgs,
    config: &ModelConfig,
    videos: &[crate::data::record::VideoRecord],
    checkpoints: &Path,
    logs: &Path,
    fold: &Fold,
    seed: u64,
) -> Result<()> {
    let fseed = fold_seed(seed, fold.index);
    let train = TrainConfig {
        lr: args.lr.unwrap_or(if args.variant.is_fusion() { FUSION_LR } else { UNIMODAL_LR }),
        epochs: args.epochs,
        seed: fseed,
        patience: (args.patience > 0).then_some(args.patience),
    };
    let pretrained = if args.variant.is_fusion() {
        let v = load_unimodal(&fold_stem(checkpoints, ModelVariant::Visual, fold.index), ModelVariant::Visual)?;
        let a = load_unimodal(&fold_stem(checkpoints, ModelVariant::Audio, fold.index), ModelVariant::Audio)?;
        Some((v, a))
    } else {
        None
    };
    let config = match &pretrained {
        Some((v, _)) => v.config.clone(),
        None => config.clone(),
    };
    info!("{}: training fold {} on {} videos", args.variant, fold.index, fold.train.len());
    let (model, history) = train_fold(
        args.variant,
        &config,
        fold,
        videos,
        &train,
        pretrained.as_ref().map(|(v, a)| (v, a)),
    )?;
    model.save(&fold_stem(checkpoints, args.variant, fold.index))?;
    history.write_csv(&logs.join(format!("{}_fold{}.csv", args.variant.key(), fold.index)))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    if args.parallel_folds == 0 {
        return Err(Error::invalid("--parallel-folds must be >= 1"));
    }
    let (manifest, videos) = load_dataset(&args.manifest)?;
    let plan = make_folds(&manifest.ids(), manifest.fold_scheme, args.seed)?;
    let checkpoints = args.out.join("checkpoints");
    let logs = args.out.join("logs");
    fs::create_dir_all(&checkpoints).map_err(|e| Error::io(&checkpoints, e))?;

    if args.variant.is_fusion() {
        let missing: Vec<String> = plan
            .folds
            .iter()
            .flat_map(|f| [ModelVariant::Visual, ModelVariant::Audio].map(|v| fold_stem(&checkpoints, v, f.index)))
            .filter(|stem| !checkpoint::exists(stem))
            .map(|stem| {
                let (blob, meta) = checkpoint::checkpoint_paths(&stem);
                format!("{} / {}", blob.display(), meta.display())
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::State(format!(
                "{} fine-tunes trained unimodal models; run `avsum train --variant v` and `--variant a` with the \
                 same --manifest, --out and --seed first. Missing: {}",
                args.variant,
                missing.join(", ")
            )));
        }
    }
    ensure_fold_plan(&checkpoints.join("folds.json"), &plan)?;

    let mut config = ModelConfig::new(manifest.feature_dim, manifest.audio_window);
    if let Some(c) = args.channels {
        config.channels = c;
    }
    config.validate()?;

    let job = |fold: &Fold| train_one_fold(args, &config, &videos, &checkpoints, &logs, fold, args.seed);
    if args.parallel_folds > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.parallel_folds)
            .build()
            .map_err(|e| Error::State(format!("thread pool: {e}")))?;
        pool.install(|| plan.folds.par_iter().map(job).collect::<Result<Vec<()>>>())?;
    } else {
        plan.folds.iter().try_for_each(job)?;
    }
    info!("{}: {} folds written to {}", args.variant, plan.len(), variant_dir(&checkpoints, args.variant).display());
    Ok(())
}

pub fn cmd_cca_split(args: &CcaSplitArgs) -> Result<()> {
    let (manifest, videos) = load_dataset(&args.manifest)?;
    let audio = args
        .audio_checkpoint
        .as_deref()
        .map(|stem| load_unimodal(stem, ModelVariant::Audio))
        .transpose()?;
    let (model, mut split) = cca_split_videos(&videos, args.epsilon, audio.as_ref())?;
    split.seed = args.seed.or(manifest.seed);
    info!(
        "first canonical correlation {:.4}; {} CCA+, {} CCA-, {} unsplittable",
        model.rho[0],
        split.cca_plus.len(),
        split.cca_minus.len(),
        split.unsplittable.len()
    );
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    split.save(&args.out)
}

#[derive(Debug, Serialize)]
struct EvalMeta<'a> {
    dataset: &'a str,
    seed: u64,
    fold_scheme: FoldScheme,
    split_seed: Option<u64>,
    variants: Vec<ModelVariant>,
    cells: &'a [ReportCell],
    videos: &'a [VideoEval],
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn check_plan(plan: &FoldPlan, manifest: &DatasetManifest) -> Result<()> {
    let mut planned: Vec<&String> = plan.folds.iter().flat_map(|f| &f.test).collect();
    let mut ids = manifest.ids();
    planned.sort();
    ids.sort();
    if planned.len() != ids.len() || planned.iter().zip(&ids).any(|(a, b)| *a != b) {
        return Err(Error::State("fold plan does not cover the manifest's videos".into()));
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (manifest, videos) = load_dataset(&args.manifest)?;
    let plan = FoldPlan::load(&args.checkpoints.join("folds.json"))?;
    check_plan(&plan, &manifest)?;
    let split = CcaSplit::load(&args.split)?;
    let variants: Vec<ModelVariant> = match &args.variants {
        Some(v) => v.clone(),
        None => ModelVariant::ALL
            .into_iter()
            .filter(|&v| plan.folds.iter().all(|f| checkpoint::exists(&fold_stem(&args.checkpoints, v, f.index))))
            .collect(),
    };
    if variants.is_empty() {
        return Err(Error::State(format!("no complete checkpoint sets under {}", args.checkpoints.display())));
    }
    let mut evals = Vec::new();
    for &variant in &variants {
        for fold in &plan.folds {
            let stem = fold_stem(&args.checkpoints, variant, fold.index);
            let model = AnyModel::<f32>::load(&stem)?;
            if model.variant() != variant {
                return Err(Error::State(format!("{} holds a {} model", stem.display(), model.variant())));
            }
            if checkpoint::read_meta(&stem)?.seed != fold_seed(plan.seed, fold.index) {
                return Err(Error::State(format!("{} was trained with another seed", stem.display())));
            }
            evals.extend(evaluate_fold(&model, fold, &videos)?);
        }
    }
    let report = build_report(&evals, &split);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    report.write_tsv(&args.out)?;
    let meta = EvalMeta {
        dataset: &manifest.dataset,
        seed: plan.seed,
        fold_scheme: plan.scheme,
        split_seed: split.seed,
        variants,
        cells: &report.cells,
        videos: &evals,
    };
    let meta_path = sidecar_path(&args.out);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&meta_path, e))?;
    info!("report written to {}", args.out.display());
    Ok(())
}
